#pragma once

#include "core.hpp"
#include "numerics.hpp"
#include "propensity.hpp"

namespace causalkit {

struct BoundsReport {
  double lower = 0, upper = 0;
  std::optional<double> se_lower, se_upper;
  std::optional<Interval> ci;
  std::map<std::string, double> diagnostics;
};

inline BoundsReport manski_bounds(const Vec& z, const Vec& y, double y_min, double y_max) {
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  if (!(y_min < y_max)) throw ValidationError("need y_min < y_max");
  if (z.size() == 0) throw ValidationError("empty data");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] < y_min || y[i] > y_max) throw ValidationError("outcome outside [y_min, y_max]");
  const double n = static_cast<double>(z.size()), p1 = z.sum() / n, p0 = 1 - p1;
  // E(Y | Z = z) pr(Z = z) without dividing by an empty arm
  const double a1 = (z.array() * y.array()).sum() / n, a0 = ((1 - z.array()) * y.array()).sum() / n;
  BoundsReport b;
  b.lower = a1 + y_min * p0 - y_max * p1 - a0;
  b.upper = a1 + y_max * p0 - y_min * p1 - a0;
  b.diagnostics["pr_treated"] = p1;
  return b;
}

// Z x M x Y counts with Y observed only for survivors (M = 1).
struct SurvivorCounts {
  double z1_m1_y1 = 0, z1_m1_y0 = 0, z1_m0 = 0;
  double z0_m1_y1 = 0, z0_m1_y0 = 0, z0_m0 = 0;
};

struct SurvivorPoint {
  double pi11 = 0, pi00 = 0, pi10 = 0;
  double lower = 0, upper = 0;
  double mu1_lower = 0, mu1_upper = 0;
};

inline SurvivorPoint survivor_point(const SurvivorCounts& c) {
  for (double v : {c.z1_m1_y1, c.z1_m1_y0, c.z1_m0, c.z0_m1_y1, c.z0_m1_y0, c.z0_m0})
    if (!(v >= 0)) throw ValidationError("counts must be nonnegative");
  const double s1 = c.z1_m1_y1 + c.z1_m1_y0, s0 = c.z0_m1_y1 + c.z0_m1_y0;
  const double n1 = s1 + c.z1_m0, n0 = s0 + c.z0_m0;
  if (n1 <= 0 || n0 <= 0 || s1 <= 0 || s0 <= 0) throw ValidationError("each arm needs survivors");
  const double m1 = s1 / n1, m0 = s0 / n0;
  if (m1 < m0)
    throw ValidationError("survival is lower under treatment; monotonicity M(1) >= M(0) is rejected by the data");
  SurvivorPoint p;
  p.pi11 = m0;
  p.pi00 = 1 - m1;
  p.pi10 = m1 - m0;
  const double ey1 = c.z1_m1_y1 / s1, ey0 = c.z0_m1_y1 / s0;
  p.mu1_lower = ((p.pi11 + p.pi10) * ey1 - p.pi10) / p.pi11;
  p.mu1_upper = (p.pi11 + p.pi10) * ey1 / p.pi11;
  // A binary Y(1) mean cannot leave [0, 1].
  p.mu1_lower = std::max(0.0, p.mu1_lower);
  p.mu1_upper = std::min(1.0, p.mu1_upper);
  p.lower = p.mu1_lower - ey0;
  p.upper = p.mu1_upper - ey0;
  return p;
}

// Bounds on tau(1,1); the Imbens-Manski interval uses bootstrap ses and z_{1-alpha}.
inline BoundsReport survivor_bounds(const SurvivorCounts& c, double alpha = 0.05, int B = 0,
                                    std::optional<std::uint64_t> seed = std::nullopt) {
  const SurvivorPoint p = survivor_point(c);
  BoundsReport b;
  b.lower = p.lower;
  b.upper = p.upper;
  b.diagnostics["pi_11"] = p.pi11;
  b.diagnostics["pi_00"] = p.pi00;
  b.diagnostics["pi_10"] = p.pi10;
  b.diagnostics["mu1_11_lower"] = p.mu1_lower;
  b.diagnostics["mu1_11_upper"] = p.mu1_upper;
  if (B > 0) {
    if (!seed) throw ValidationError("bootstrap interval needs a seed");
    // unit-level records: 0..5 index the cells in declaration order
    const std::array<double, 6> cells{c.z1_m1_y1, c.z1_m1_y0, c.z1_m0, c.z0_m1_y1, c.z0_m1_y0, c.z0_m0};
    std::vector<int> unit;
    for (int k = 0; k < 6; ++k)
      for (long j = 0; j < std::lround(cells[k]); ++j) unit.push_back(k);
    const auto bm = bootstrap_multi(static_cast<int>(unit.size()), B, *seed, 2, [&](const IVec& idx) -> std::optional<Vec> {
      std::array<double, 6> cc{};
      for (int i : idx) cc[unit[i]] += 1;
      const SurvivorPoint q = survivor_point({cc[0], cc[1], cc[2], cc[3], cc[4], cc[5]});
      Vec v(2);
      v << q.lower, q.upper;
      return v;
    });
    b.se_lower = bm.se[0];
    b.se_upper = bm.se[1];
    const double q = normal_quantile(1 - alpha);
    b.ci = Interval{b.lower - q * bm.se[0], b.upper + q * bm.se[1]};
    b.diagnostics["bootstrap_dropped"] = bm.dropped;
  }
  return b;
}

enum class RosenbaumStat { pair_t_abs, signed_rank, sign };

inline RosenbaumStat parse_rosenbaum_stat(const std::string& s) {
  if (s == "pair_t_abs") return RosenbaumStat::pair_t_abs;
  if (s == "signed_rank") return RosenbaumStat::signed_rank;
  if (s == "sign") return RosenbaumStat::sign;
  throw ValidationError("unknown Rosenbaum statistic: " + s);
}

// Upper-tail normal-approximation worst-case p-value.
inline double rosenbaum_pvalue(const Vec& diffs, double gamma, RosenbaumStat stat = RosenbaumStat::pair_t_abs) {
  if (!(gamma >= 1.0)) throw ValidationError("gamma must be >= 1");
  std::vector<double> d;
  for (Eigen::Index i = 0; i < diffs.size(); ++i)
    if (diffs[i] != 0.0) d.push_back(diffs[i]);
  if (d.empty()) throw ValidationError("all pair differences are zero");
  const Eigen::Index n = static_cast<Eigen::Index>(d.size());
  Vec a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = std::abs(d[i]);
  Vec q;
  switch (stat) {
    case RosenbaumStat::pair_t_abs: q = a; break;
    case RosenbaumStat::signed_rank: q = midranks(a); break;
    case RosenbaumStat::sign: q = Vec::Ones(n); break;
  }
  double t = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (d[i] > 0) t += q[i];
  const double r = gamma / (1 + gamma);
  const double e = r * q.sum();
  const double v = gamma / ((1 + gamma) * (1 + gamma)) * q.squaredNorm();
  return 1.0 - normal_cdf((t - e) / std::sqrt(v));
}

struct SensitivityCurve {
  std::vector<double> grid;
  std::vector<double> values;
  std::optional<double> gamma_star;       // sup{Gamma : p < alpha}, refined between grid points
  std::optional<double> gamma_star_grid;  // largest grid value with p < alpha
};

inline void check_grid(const std::vector<double>& g) {
  if (g.empty()) throw ValidationError("empty grid");
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) throw ValidationError("grid must be strictly increasing");
}

inline SensitivityCurve gamma_curve(const Vec& diffs, const std::vector<double>& grid,
                                    RosenbaumStat stat = RosenbaumStat::pair_t_abs, double alpha = 0.05) {
  check_grid(grid);
  SensitivityCurve c;
  c.grid = grid;
  c.values.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) { c.values[k] = rosenbaum_pvalue(diffs, grid[k], stat); });
  std::size_t last = grid.size();
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (c.values[k] < alpha) last = k;
  if (last == grid.size()) return c;
  c.gamma_star_grid = grid[last];
  if (last + 1 == grid.size()) {
    c.gamma_star = grid[last];
    return c;
  }
  // p(Gamma) is nondecreasing; bisect on the crossing.
  double lo = grid[last], hi = grid[last + 1];
  for (int it = 0; it < 100 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rosenbaum_pvalue(diffs, mid, stat) < alpha ? lo : hi) = mid;
  }
  c.gamma_star = lo;
  return c;
}

enum class EpsEstimator { reg, ht, hajek, dr };

inline EpsEstimator parse_eps_estimator(const std::string& s) {
  if (s == "reg") return EpsEstimator::reg;
  if (s == "ht") return EpsEstimator::ht;
  if (s == "hajek") return EpsEstimator::hajek;
  if (s == "dr") return EpsEstimator::dr;
  throw ValidationError("unknown estimator: " + s);
}

// reg, ht, hajek, dr under constant sensitivity parameters eps1, eps0.
inline Vec epsilon_point(const Vec& z, const Vec& y, const Mat& x, double eps1, double eps0,
                         OutcomeFamily fam = OutcomeFamily::linear, Trunc trunc = {}) {
  const Vec e = fit_pscore(x, z, trunc).scores;
  const auto [m1, m0] = arm_predictions(z, y, x, fam);
  const auto za = z.array(), ya = y.array(), ea = e.array(), a1 = m1.array(), a0 = m0.array();
  const double reg = (za * ya).mean() + ((1 - za) * a1 / eps1).mean() - (za * a0 * eps0).mean() - ((1 - za) * ya).mean();
  const auto w1 = (ea + (1 - ea) / eps1).eval();
  const auto w0 = (ea * eps0 + 1 - ea).eval();
  const double t1 = (za * ya * w1 / ea).mean(), t0 = ((1 - za) * ya * w0 / (1 - ea)).mean();
  const double ht = t1 - t0;
  const double hajek = t1 / (za / ea).mean() - t0 / ((1 - za) / (1 - ea)).mean();
  const double dr = ht - ((za - ea) * (a1 / (ea * eps1) + a0 * eps0 / (1 - ea))).mean();
  Vec out(4);
  out << reg, ht, hajek, dr;
  return out;
}

inline EstimateReport epsilon_sensitivity(const Vec& z, const Vec& y, const Mat& x, double eps1, double eps0,
                                          EpsEstimator est, BootSpec bs = {}, double alpha = 0.05,
                                          OutcomeFamily fam = OutcomeFamily::linear) {
  if (!(eps1 > 0 && eps0 > 0)) throw ValidationError("sensitivity parameters must be positive");
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  const int k = static_cast<int>(est);
  Vec point(1);
  point[0] = epsilon_point(z, y, x, eps1, eps0, fam)[k];
  static const char* names[] = {"eps_reg", "eps_ht", "eps_hajek", "eps_dr"};
  auto r = detail::boot_reports({names[k]}, "ate", point, static_cast<int>(y.size()), bs, alpha, [&](const IVec& idx) {
    Vec v(1);
    v[0] = epsilon_point(subset(z, idx), subset(y, idx), subset_rows(x, idx), eps1, eps0, fam)[k];
    return v;
  })[0];
  r.diagnostics["eps1"] = eps1;
  r.diagnostics["eps0"] = eps0;
  return r;
}

// Estimates over the eps1 x eps0 grid; row i is eps1 = grid1[i].
inline Mat epsilon_grid(const Vec& z, const Vec& y, const Mat& x, const std::vector<double>& grid1,
                        const std::vector<double>& grid0, EpsEstimator est) {
  for (double v : grid1)
    if (!(v > 0)) throw ValidationError("sensitivity parameters must be positive");
  for (double v : grid0)
    if (!(v > 0)) throw ValidationError("sensitivity parameters must be positive");
  Mat out(grid1.size(), grid0.size());
  parallel_for(grid1.size() * grid0.size(), [&](std::size_t k) {
    const std::size_t i = k / grid0.size(), j = k % grid0.size();
    out(i, j) = epsilon_point(z, y, x, grid1[i], grid0[j])[static_cast<int>(est)];
  });
  return out;
}

}  // namespace causalkit
