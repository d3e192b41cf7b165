// Reproduces the bundled-data results and prints one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria.
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "causalkit.hpp"

using namespace causalkit;

namespace {

std::string data_file(const std::string& name) { return std::string(CAUSALKIT_DATA_DIR) + "/" + name; }

struct Criterion {
  int id;
  std::string name;
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what, double got) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s=%.10g%s", detail.empty() ? "" : "; ", what.c_str(), got, cond ? "" : " (off)");
    detail += buf;
    ok = ok && cond;
  }
  void near(const std::string& what, double got, double want, double tol) { check(std::abs(got - want) <= tol, what, got); }
  void rel(const std::string& what, double got, double want, double tol) {
    check(std::abs(got - want) <= tol * std::abs(want), what, got);
  }
  void flag(const std::string& what, bool v) {
    detail += (detail.empty() ? "" : "; ") + what + "=" + (v ? "true" : "false");
    ok = ok && v;
  }
};

int failures = 0;

template <class F>
void run(int id, const std::string& name, F&& body) {
  Criterion c{id, name, true, {}};
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.detail += std::string("; threw: ") + e.what();
  }
  std::printf("%s [%2d] %s: %s\n", c.ok ? "PASS" : "FAIL", c.id, c.name.c_str(), c.detail.c_str());
  if (!c.ok) ++failures;
}

struct Units {
  Vec z, y;
  IVec s;
};

// Tolbutamide trial: stratum x arm x (survived, died).
Units meinert() {
  const int c[2][2][2] = {{{98, 8}, {115, 5}}, {{76, 22}, {69, 16}}};
  std::vector<double> z, y;
  Units u;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int o = 0; o < 2; ++o)
        for (int k = 0; k < c[s][a][o]; ++k) {
          z.push_back(a == 0);
          y.push_back(o == 0);
          u.s.push_back(s);
        }
  u.z = Eigen::Map<Vec>(z.data(), static_cast<Eigen::Index>(z.size()));
  u.y = Eigen::Map<Vec>(y.data(), static_cast<Eigen::Index>(y.size()));
  return u;
}

}  // namespace

int main() {
  run(1, "kidney stone Simpson reversal", [](Criterion& c) {
    const auto s = simpson_decompose({{81, 6, 234, 36}, {192, 71, 55, 25}});
    c.near("pooled_rd", s.pooled.rd, -0.0452, 1e-3);
    // The small-stone table gives 81/87 - 234/270 = 0.064368 (printed as 6%); a 0.0630 target is
    // not reachable from these counts, so the stratum is checked against its exact fraction.
    c.near("small_rd", s.strata[0].rd, 81.0 / 87 - 234.0 / 270, 1e-12);
    c.near("small_rd_pct", std::round(100 * s.strata[0].rd), 6, 0);
    c.near("large_rd", s.strata[1].rd, 0.0423, 1e-3);
    c.flag("flip", s.flip);
  });

  run(2, "resume audit", [](Criterion& c) {
    const TwoByTwo t{157, 2278, 235, 2200};
    c.near("rd", risk_measures(t).rd, -0.0320, 1e-4);
    c.rel("p_two_sided", hypergeom_exact(t, Sided::two), 4.759e-05, 0.02);
  });

  run(3, "Lind and lady tasting tea", [](Criterion& c) {
    c.check(hypergeom_exact({2, 0, 0, 10}, Sided::upper) == 1.0 / 66, "lind_p", hypergeom_exact({2, 0, 0, 10}, Sided::upper));
    c.check(hypergeom_exact({4, 0, 0, 4}, Sided::upper) == 1.0 / 70, "tea_p", hypergeom_exact({4, 0, 0, 4}, Sided::upper));
  });

  run(4, "Darwin matched pairs exact FRT", [](Criterion& c) {
    const Dataset ds = load_csv(data_file("darwin.csv"), {{"diff", ColumnRole::outcome}});
    const Vec d = ds.column("diff");
    const auto r = frt(FrtData::pairs(d), Vec::Ones(d.size()), AssignmentDesign::mpe(static_cast<int>(d.size())),
                       {StatId::pair_mean});
    c.flag("exact", r.exact);
    c.check(r.count == 32768, "assignments", static_cast<double>(r.count));
    // the printed value carries 7 significant digits
    c.near("p", r.p_hat, 0.02633667, 5e-9);
  });

  run(5, "children's television matched pairs", [](Criterion& c) {
    const Dataset ds = load_csv(data_file("electric_company.csv"), {});
    const IVec pair = encode_labels(ds.column("pair"));
    const Vec z = ds.column("z"), x = ds.column("pretest"), y = ds.column("posttest");
    const FrtData plain = FrtData::pairs_from_units(pair, z, y);
    const FrtData adj = FrtData::pairs_from_units(pair, z, y, Mat(x));
    const auto r = mpe(plain.diff);
    c.near("tau", r.estimate, 13.425, 1e-3);
    c.near("se", r.se, 4.636337, 1e-3);
    const auto a = mpe(adj.diff, adj.xdiff);
    c.near("adj_tau", a.estimate, 8.994, 1e-2);
    c.near("adj_se", a.se, 1.410, 1e-2);
    FrtOptions o;
    o.two_sided = true;
    const auto p1 = frt(plain, Vec::Ones(8), AssignmentDesign::mpe(8), {StatId::pair_t}, o);
    const auto p2 = frt(adj, Vec::Ones(8), AssignmentDesign::mpe(8), {StatId::pair_t}, o);
    c.check(p1.p_hat == 0.03125, "frt_p", p1.p_hat);
    c.check(p2.p_hat == 0.0078125, "frt_p_adj", p2.p_hat);
  });

  run(6, "Meinert tolbutamide stratification", [](Criterion& c) {
    const Units u = meinert();
    const auto d = stratified_detail(u.z, u.y, u.s);
    c.near("post_stratified", d.overall.estimate, -0.035, 1e-3);
    c.near("crude", neyman_cre(u.z, u.y).estimate, -0.045, 1e-3);
    c.near("se_young", d.strata[0].se, 0.031, 1e-3);
    c.near("se_old", d.strata[1].se, 0.060, 1e-3);
  });

  run(7, "UCB admissions", [](Criterion& c) {
    const auto s = simpson_decompose({{512, 313, 89, 19}, {353, 207, 17, 8}, {120, 205, 202, 391},
                                      {138, 279, 131, 244}, {53, 138, 94, 299}, {22, 351, 24, 317}});
    c.near("pooled", s.pooled.rd, 0.14165, 1e-4);
    const double printed[] = {-0.20, -0.05, 0.03, -0.02, 0.04, -0.01};
    for (int k = 0; k < 6; ++k) c.near(std::string("dept") + char('A' + k), s.strata[k].rd, printed[k], 5e-3);
  });

  run(8, "Hammond smoking and lung cancer", [](Criterion& c) {
    const auto m = risk_measures({397, 78557, 51, 108778});
    c.rel("rr", m.rr, 10.7298, 1e-2);
    c.rel("ci_lo", m.ci_rr.lo, 8.017, 1e-2);
    c.rel("ci_hi", m.ci_rr.hi, 14.36, 1e-2);
    const auto [ep, ec] = evalue_report(m.rr, m.ci_rr.lo);
    c.rel("evalue", ep, 20.947, 1e-2);
    c.rel("evalue_ci", ec, 15.518, 1e-2);
  });

  run(9, "truncation by death bounds", [](Criterion& c) {
    const SurvivorCounts k{54, 268, 109, 59, 218, 152};
    const auto p = survivor_point(k);
    c.near("pi11", p.pi11, 0.646, 1e-3);
    c.near("pi00", p.pi00, 0.253, 1e-3);
    c.near("pi10", p.pi10, 0.101, 1e-3);
    c.near("mu_lo", p.mu1_lower, 0.037, 1e-3);
    c.near("mu_hi", p.mu1_upper, 0.194, 1e-3);
    c.near("tau_lo", p.lower, -0.176, 1e-3);
    c.near("tau_hi", p.upper, -0.019, 1e-3);
    const auto b = survivor_bounds(k, 0.05, 500, 2024);
    c.near("im_lo", b.ci->lo, -0.267, 0.02);
    c.near("im_hi", b.ci->hi, 0.039, 0.02);
  });

  run(10, "binary instrumental variables", [](Criterion& c) {
    const auto s = binary_iv_decompose({{107, 42, 68, 42, 24, 8, 131, 79}});
    c.near("pi_c", s.pi_c, 0.44306, 1e-4);
    c.near("mu_c1", s.mu_c1, 0.70861, 1e-4);
    c.near("tau_c", s.tau_c, 0.07940, 1e-4);
    const IvCounts flu{{31, 422, 84, 935, 30, 233, 99, 1027}};
    c.near("flu_mu_c1", binary_iv_decompose(flu).mu_c1, -0.00455, 1e-5);
    bool neg = false;
    for (const auto& q : iv_inequalities(flu)) neg = neg || q.negative;
    c.flag("flu_violation", binary_iv_decompose(flu).violation && neg);
  });

  run(11, "algebraic identities (spot check; full suite in test_identities)", [](Criterion& c) {
    std::mt19937_64 g(7);
    std::normal_distribution<double> nd;
    const int n = 120;
    Vec z(n), u(n), y(n), w(n), m(n);
    Mat x(n, 2);
    for (int i = 0; i < n; ++i) {
      z[i] = i % 3 == 0;
      x(i, 0) = nd(g), x(i, 1) = nd(g), u[i] = nd(g), w[i] = nd(g);
      m[i] = 0.5 * z[i] + x(i, 0) + nd(g);
      y[i] = z[i] + m[i] + u[i] + x(i, 1);
    }
    const LinearFit f = ols(hcat({Mat::Ones(n, 1), Mat(z)}), y);
    c.near("hc2_se", robust_se(f, HC::HC2, 1), neyman_cre(z, y).se, 1e-9);
    const auto bk = baron_kenny(z, m, y, x);
    c.near("nie_by_difference", bk.diagnostics.at("total_effect") - bk.nde.estimate, bk.nie.estimate, 1e-9);
    const Vec d = w + u + 0.8 * x.col(0);
    const double t = tsls_fit(y, Mat(d), Mat(w), x).coefficients[1];
    c.near("ils", ils(y, d, w, x).estimate, t, 1e-9);
    c.near("control_function", control_function_point(y, Mat(d), Mat(w), x), t, 1e-9);
    const double e = evalue(10.7298);
    c.near("bounding_factor", cornfield_bounding_factor(e, e), 10.7298, 1e-9);
  });

  run(12, "simulation properties (spot check; full suite in test_properties)", [](Criterion& c) {
    const auto r = bias_demo(BiasKind::z_bias, {1, 1, 1, 0, 0}, 1000000, 20);
    c.near("zbias_unadjusted", r.unadjusted.estimate, 1.0 / 3, 3 * r.unadjusted.se);
    c.near("zbias_adjusted", r.adjusted.estimate, 0.5, 3 * r.adjusted.se);
    // Neyman variance is exact in expectation under a constant effect
    std::mt19937_64 g(3);
    std::normal_distribution<double> nd;
    SimTruth t;
    t.y0.resize(40);
    for (int i = 0; i < 40; ++i) t.y0[i] = nd(g);
    t.y1 = (t.y0.array() + 1.0).matrix();
    const int draws = 10000;
    double sum_v = 0;
    for (int k = 0; k < draws; ++k) {
      Rng rng(11, static_cast<std::uint64_t>(k));
      const Vec z = sample_assignment(AssignmentDesign::cre(20, 20), rng);
      const double se = neyman_cre(z, t.observed(z)).se;
      sum_v += se * se;
    }
    const double ratio = sum_v / draws / t.var_diff_means(20, 20);
    c.check(ratio >= 0.95 && ratio <= 1.05, "mean_vhat_over_var", ratio);
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
