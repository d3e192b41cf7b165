#pragma once

#include "core.hpp"
#include "numerics.hpp"
#include "propensity.hpp"
#include "sensitivity.hpp"

namespace causalkit {

inline constexpr const char* kCrossWorldCaveat =
    "natural effects assume no unmeasured confounding of Z-M, Z-Y and M-Y and cross-world independence; the last is untestable";

struct MediationReport {
  EstimateReport nde;
  EstimateReport nie;
  std::map<std::string, double> diagnostics;
};

namespace detail {

inline Mat opt_cols(const Mat& x, Eigen::Index n) { return x.cols() > 0 ? x : Mat(n, 0); }

}  // namespace detail

// NDE = theta1, NIE = theta2 beta1 with Sobel variance from robust component variances.
inline MediationReport baron_kenny(const Vec& z, const Vec& m, const Vec& y, const Mat& x, double alpha = 0.05,
                                   HC hc = HC::HC3) {
  require_same_length(z.size(), m.size(), "treatment vs mediator");
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  const Eigen::Index n = y.size();
  const Mat one = Mat::Ones(n, 1), xx = detail::opt_cols(x, n);
  const LinearFit med = ols(hcat({one, Mat(z), xx}), m);
  const LinearFit out = ols(hcat({one, Mat(z), Mat(m), xx}), y);
  const LinearFit tot = ols(hcat({one, Mat(z), xx}), y);
  const Mat vm = robust_cov(med, hc), vo = robust_cov(out, hc);
  const double b1 = med.coefficients[1], t1 = out.coefficients[1], t2 = out.coefficients[2];
  MediationReport r;
  r.nde = wald_report("baron_kenny", "nde", t1, std::sqrt(vo(1, 1)), alpha, static_cast<long>(n));
  const double sobel = std::sqrt(vo(2, 2) * b1 * b1 + t2 * t2 * vm(1, 1));
  r.nie = wald_report("baron_kenny", "nie", t2 * b1, sobel, alpha, static_cast<long>(n));
  r.nie.notes.push_back("Sobel standard error");
  r.nde.notes.push_back(kCrossWorldCaveat);
  r.diagnostics["beta1"] = b1;
  r.diagnostics["theta1"] = t1;
  r.diagnostics["theta2"] = t2;
  r.diagnostics["total_effect"] = tot.coefficients[1];
  return r;
}

// Outcome model with a Z x M interaction: NDE = theta1 + theta3 (beta0 + beta2' xbar), NIE = (theta2 + theta3) beta1.
inline Vec bk_interaction_point(const Vec& z, const Vec& m, const Vec& y, const Mat& x) {
  const Eigen::Index n = y.size();
  const Mat one = Mat::Ones(n, 1), xx = detail::opt_cols(x, n);
  const Vec bm = ols(hcat({one, Mat(z), xx}), m).coefficients;
  const Vec zm = (z.array() * m.array()).matrix();
  const Vec th = ols(hcat({one, Mat(z), Mat(m), Mat(zm), xx}), y).coefficients;
  double mbar0 = bm[0];
  for (Eigen::Index j = 0; j < xx.cols(); ++j) mbar0 += bm[2 + j] * xx.col(j).mean();
  Vec v(2);
  v << th[1] + th[3] * mbar0, (th[2] + th[3]) * bm[1];
  return v;
}

inline MediationReport baron_kenny_interaction(const Vec& z, const Vec& m, const Vec& y, const Mat& x,
                                               BootSpec bs, double alpha = 0.05) {
  require_same_length(z.size(), m.size(), "treatment vs mediator");
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  const Vec point = bk_interaction_point(z, m, y, x);
  auto reps = detail::boot_reports({"baron_kenny_interaction", "baron_kenny_interaction"}, "nde", point,
                                   static_cast<int>(y.size()), bs, alpha, [&](const IVec& idx) {
                                     return bk_interaction_point(subset(z, idx), subset(m, idx), subset(y, idx),
                                                                 subset_rows(x, idx));
                                   });
  MediationReport r;
  r.nde = reps[0];
  r.nie = reps[1];
  r.nie.estimand = "nie";
  r.nde.notes.push_back(kCrossWorldCaveat);
  return r;
}

namespace detail {

// pr(M = 1 | Z = z, X) for every unit, from a logistic fit in arm z.
// A mediator constant within the arm gives that constant.
inline Vec mediator_prob(const Vec& z, const Vec& m, const Mat& x, double arm) {
  const IVec idx = where(z, arm);
  if (idx.empty()) throw ValidationError("empty treatment arm");
  const Vec ma = subset(m, idx);
  if (ma.minCoeff() == ma.maxCoeff()) return Vec::Constant(z.size(), ma[0]);
  const LogisticFit f = logistic_fit(with_intercept(subset_rows(x, idx)), ma);
  Vec p(z.size());
  const Mat d = with_intercept(x);
  for (Eigen::Index i = 0; i < z.size(); ++i) p[i] = detail::expit(d.row(i).dot(f.coefficients));
  return p;
}

// E(Y | Z = z, M = mv, X) for every unit from OLS in the (z, mv) cell.
inline Vec cell_mean(const Vec& z, const Vec& m, const Vec& y, const Mat& x, double zv, double mv) {
  const Vec w = ((z.array() == zv) && (m.array() == mv)).cast<double>().matrix();
  if (w.sum() == 0) throw ValidationError("empty (Z, M) cell");
  return wls(with_intercept(x), y, w).fitted;
}

}  // namespace detail

inline Vec mediation_formula_point(const Vec& z, const Vec& m, const Vec& y, const Mat& x) {
  const Eigen::Index n = y.size();
  const Mat xx = detail::opt_cols(x, n);
  const Vec p1 = detail::mediator_prob(z, m, xx, 1.0), p0 = detail::mediator_prob(z, m, xx, 0.0);
  const Vec mu11 = detail::cell_mean(z, m, y, xx, 1, 1), mu10 = detail::cell_mean(z, m, y, xx, 1, 0);
  const Vec mu01 = detail::cell_mean(z, m, y, xx, 0, 1), mu00 = detail::cell_mean(z, m, y, xx, 0, 0);
  const auto q0 = p0.array();
  const double nde = ((mu11 - mu01).array() * q0 + (mu10 - mu00).array() * (1 - q0)).mean();
  const double nie = ((p1 - p0).array() * (mu11 - mu10).array()).mean();
  Vec v(2);
  v << nde, nie;
  return v;
}

inline MediationReport mediation_formula_binary_m(const Vec& z, const Vec& m, const Vec& y, const Mat& x, BootSpec bs,
                                                  double alpha = 0.05) {
  require_same_length(z.size(), m.size(), "treatment vs mediator");
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  require_binary(m, "mediator");
  const Vec point = mediation_formula_point(z, m, y, x);
  auto reps = detail::boot_reports({"mediation_formula", "mediation_formula"}, "nde", point, static_cast<int>(y.size()),
                                   bs, alpha, [&](const IVec& idx) {
                                     return mediation_formula_point(subset(z, idx), subset(m, idx), subset(y, idx),
                                                                    subset_rows(detail::opt_cols(x, y.size()), idx));
                                   });
  MediationReport r;
  r.nde = reps[0];
  r.nie = reps[1];
  r.nie.estimand = "nie";
  r.nde.notes.push_back(kCrossWorldCaveat);
  return r;
}

// tau(1,0) and tau(0,0) by principal score weighting; NaN when a stratum is absent.
inline Vec psw_point(const Vec& z, const Vec& m, const Vec& y, const Mat& x) {
  const Eigen::Index n = y.size();
  const Mat xx = detail::opt_cols(x, n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (z[i] == 0.0 && m[i] == 1.0)
      throw ValidationError("control unit with M = 1: principal score weighting requires strong monotonicity M(0) = 0");
  const IVec t = where(z, 1.0), c = where(z, 0.0);
  if (t.empty() || c.empty()) throw ValidationError("both arms must be present");
  const Vec ps10 = detail::mediator_prob(z, m, xx, 1.0);
  const double pi10 = subset(m, t).mean(), pi00 = 1 - pi10;
  double s1 = 0, c1 = 0, s0 = 0, c0 = 0, w10 = 0, w00 = 0;
  for (int i : t) {
    if (m[i] == 1.0) {
      s1 += y[i];
      ++c1;
    } else {
      s0 += y[i];
      ++c0;
    }
  }
  for (int i : c) {
    w10 += y[i] * ps10[i];
    w00 += y[i] * (1 - ps10[i]);
  }
  const double nc = static_cast<double>(c.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Vec v(2);
  v[0] = c1 > 0 ? s1 / c1 - (w10 / nc) / pi10 : nan;
  v[1] = c0 > 0 ? s0 / c0 - (w00 / nc) / pi00 : nan;
  return v;
}

inline std::vector<EstimateReport> principal_score_weighting(const Vec& z, const Vec& m, const Vec& y, const Mat& x,
                                                             BootSpec bs, double alpha = 0.05) {
  require_same_length(z.size(), m.size(), "treatment vs mediator");
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  require_binary(m, "intermediate variable");
  const Vec point = psw_point(z, m, y, x);
  if (std::isnan(point[0])) throw ValidationError("no treated units with M = 1: tau(1,0) undefined");
  if (std::isnan(point[1])) throw ValidationError("no treated units with M = 0: tau(0,0) undefined");
  auto reps = detail::boot_reports({"principal_score", "principal_score"}, "tau(1,0)", point, static_cast<int>(y.size()),
                                   bs, alpha, [&](const IVec& idx) {
                                     return psw_point(subset(z, idx), subset(m, idx), subset(y, idx),
                                                      subset_rows(detail::opt_cols(x, y.size()), idx));
                                   });
  reps[1].estimand = "tau(0,0)";
  return reps;
}

// reg, ht, hajek, dr for mu(1,m) - mu(0,m) with e_zm(x) = e_z(x) pr(M = m | z, x).
inline Vec cde_point(const Vec& z, const Vec& m, const Vec& y, const Mat& x, double m_level) {
  const Eigen::Index n = y.size();
  const Mat xx = detail::opt_cols(x, n);
  const Vec ez = fit_pscore(xx, z).scores;
  Vec out = Vec::Zero(4);
  for (int zv = 1; zv >= 0; --zv) {
    const Vec pm1 = detail::mediator_prob(z, m, xx, zv);
    const Vec pz = zv == 1 ? ez : Vec((1.0 - ez.array()).matrix());
    const Vec pm = m_level == 1.0 ? pm1 : Vec((1.0 - pm1.array()).matrix());
    const Vec e = (pz.array() * pm.array()).matrix();
    const Vec ind = ((z.array() == zv) && (m.array() == m_level)).cast<double>().matrix();
    if (ind.sum() == 0) throw ValidationError("empty (Z, M) cell at the requested mediator level");
    for (Eigen::Index i = 0; i < n; ++i)
      if (ind[i] == 1.0 && !(e[i] > 0)) throw NumericError("joint (Z, M) probability is zero for an observed unit");
    const Vec mu = detail::cell_mean(z, m, y, xx, zv, m_level);
    const auto ia = ind.array(), ya = y.array(), ea = e.array();
    // observed-cell terms only; zero indicators never divide
    const double ht = (ia * ya / ea.max(1e-300)).mean();
    const double hj = ht / (ia / ea.max(1e-300)).mean();
    const double reg = mu.mean();
    const double dr = reg + (ia * (ya - mu.array()) / ea.max(1e-300)).mean();
    const double sgn = zv == 1 ? 1.0 : -1.0;
    out[0] += sgn * reg;
    out[1] += sgn * ht;
    out[2] += sgn * hj;
    out[3] += sgn * dr;
  }
  return out;
}

inline EstimateReport cde_estimators(const Vec& z, const Vec& m, const Vec& y, const Mat& x, double m_level,
                                     EpsEstimator est, BootSpec bs, double alpha = 0.05) {
  require_same_length(z.size(), m.size(), "treatment vs mediator");
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  require_binary(m, "mediator");
  if (m_level != 0.0 && m_level != 1.0) throw ValidationError("mediator level must be 0 or 1");
  const int k = static_cast<int>(est);
  static const char* names[] = {"cde_reg", "cde_ht", "cde_hajek", "cde_dr"};
  Vec point(1);
  point[0] = cde_point(z, m, y, x, m_level)[k];
  auto r = detail::boot_reports({names[k]}, "cde(" + std::to_string(static_cast<int>(m_level)) + ")", point,
                                static_cast<int>(y.size()), bs, alpha, [&](const IVec& idx) {
                                  Vec v(1);
                                  v[0] = cde_point(subset(z, idx), subset(m, idx), subset(y, idx),
                                                   subset_rows(detail::opt_cols(x, y.size()), idx), m_level)[k];
                                  return v;
                                })[0];
  return r;
}

}  // namespace causalkit
