#pragma once

#include "core.hpp"
#include "design_estimators.hpp"
#include "numerics.hpp"

namespace causalkit {

struct Trunc {
  double lo = 0.0;
  double hi = 1.0;
  bool active() const { return lo > 0.0 || hi < 1.0; }
};

inline Trunc parse_trunc(double lo, double hi) {
  if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) throw ValidationError("truncation bounds must satisfy 0 <= lo < hi <= 1");
  return {lo, hi};
}

struct PSModel {
  Vec scores;
  Vec coefficients;
  std::optional<Trunc> trunc;
};

inline Vec truncate_scores(const Vec& e, const Trunc& t) {
  return e.cwiseMax(t.lo).cwiseMin(t.hi);
}

inline PSModel fit_pscore(const Mat& x, const Vec& z, std::optional<Trunc> trunc = std::nullopt) {
  require_same_length(x.rows(), z.size(), "covariates vs treatment");
  require_binary(z, "treatment");
  const LogisticFit f = logistic_fit(with_intercept(x), z);
  PSModel m;
  m.coefficients = f.coefficients;
  m.scores = f.fitted_probabilities;
  if (trunc && trunc->active()) {
    m.scores = truncate_scores(m.scores, *trunc);
    m.trunc = trunc;
  }
  for (Eigen::Index i = 0; i < m.scores.size(); ++i)
    if (!(m.scores[i] > 0.0 && m.scores[i] < 1.0)) throw NumericError("estimated propensity score on the boundary");
  return m;
}

enum class OutcomeFamily { linear, logistic };

// Arm-specific outcome models fit on that arm and predicted for everyone.
inline std::pair<Vec, Vec> arm_predictions(const Vec& z, const Vec& y, const Mat& x,
                                           OutcomeFamily fam = OutcomeFamily::linear) {
  const Mat d = with_intercept(x);
  const Vec w1 = z, w0 = (1.0 - z.array()).matrix();
  if (fam == OutcomeFamily::logistic) {
    const LogisticFit f1 = logistic_fit(d, y, w1), f0 = logistic_fit(d, y, w0);
    return {f1.fitted_probabilities, f0.fitted_probabilities};
  }
  return {wls(d, y, w1).fitted, wls(d, y, w0).fitted};
}

// Point estimates (reg, HT, Hajek, DR) for the ATE.
inline Vec ate_point(const Vec& z, const Vec& y, const Mat& x, OutcomeFamily fam = OutcomeFamily::linear,
                     Trunc trunc = {}) {
  const Vec e = fit_pscore(x, z, trunc).scores;
  const auto [m1, m0] = arm_predictions(z, y, x, fam);
  const auto za = z.array(), ya = y.array(), ea = e.array();
  const double reg = (m1 - m0).mean();
  const double yt = (za * ya / ea).mean(), yc = ((1 - za) * ya / (1 - ea)).mean();
  const double ot = (za / ea).mean(), oc = ((1 - za) / (1 - ea)).mean();
  const double rt = (za * (ya - m1.array()) / ea).mean();
  const double rc = ((1 - za) * (ya - m0.array()) / (1 - ea)).mean();
  Vec out(4);
  out << reg, yt - yc, yt / ot - yc / oc, reg + rt - rc;
  return out;
}

// HT and Hajek given fixed scores.
inline std::pair<double, double> ipw_point(const Vec& e, const Vec& z, const Vec& y) {
  const auto za = z.array(), ya = y.array(), ea = e.array();
  const double yt = (za * ya / ea).mean(), yc = ((1 - za) * ya / (1 - ea)).mean();
  const double ot = (za / ea).mean(), oc = ((1 - za) / (1 - ea)).mean();
  return {yt - yc, yt / ot - yc / oc};
}

// B = 0 skips the bootstrap (point estimates only). B > 0 requires a seed.
struct BootSpec {
  int B = 200;
  std::optional<std::uint64_t> seed;
};

namespace detail {

template <class Point>
std::vector<EstimateReport> boot_reports(const std::vector<std::string>& names, const std::string& estimand,
                                         const Vec& point, int n, const BootSpec& bs, double alpha, Point&& fn) {
  BootstrapMultiResult b;
  const bool boot = bs.B > 0;
  if (boot && !bs.seed) throw ValidationError("bootstrap standard errors need a seed");
  if (boot)
    b = bootstrap_multi(n, bs.B, *bs.seed, static_cast<int>(point.size()),
                        [&](const IVec& idx) -> std::optional<Vec> { return fn(idx); });
  std::vector<EstimateReport> out;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    const double se = boot ? b.se[k] : std::numeric_limits<double>::quiet_NaN();
    auto r = wald_report(names[k], estimand, point[k], se, alpha, n);
    if (boot) {
      r.diagnostics["bootstrap_B"] = bs.B;
      r.diagnostics["bootstrap_dropped"] = b.dropped;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

// reg, ht, hajek, dr with bootstrap SEs refitting every model per resample.
inline std::vector<EstimateReport> ate_estimators(const Vec& z, const Vec& y, const Mat& x,
                                                  OutcomeFamily fam = OutcomeFamily::linear, Trunc trunc = {},
                                                  BootSpec bs = {}, double alpha = 0.05) {
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  const Vec point = ate_point(z, y, x, fam, trunc);
  return detail::boot_reports({"reg", "ht", "hajek", "dr"}, "ate", point, static_cast<int>(y.size()), bs, alpha,
                              [&](const IVec& idx) {
                                return ate_point(subset(z, idx), subset(y, idx), subset_rows(x, idx), fam, trunc);
                              });
}

inline EstimateReport doubly_robust_ate(const Vec& z, const Vec& y, const Mat& x,
                                        OutcomeFamily fam = OutcomeFamily::linear, Trunc trunc = {},
                                        BootSpec bs = {}, double alpha = 0.05) {
  return ate_estimators(z, y, x, fam, trunc, bs, alpha)[3];
}

enum class IpwKind { ht, hajek };

inline EstimateReport ipw(const Vec& z, const Vec& y, const Mat& x, IpwKind kind, Trunc trunc = {}, BootSpec bs = {},
                          double alpha = 0.05) {
  auto pt = [&](const Vec& zz, const Vec& yy, const Mat& xx) {
    const auto [ht, hj] = ipw_point(fit_pscore(xx, zz, trunc).scores, zz, yy);
    Vec v(2);
    v << ht, hj;
    return v;
  };
  const Vec point = pt(z, y, x);
  auto reps = detail::boot_reports({"ht", "hajek"}, "ate", point, static_cast<int>(y.size()), bs, alpha,
                                   [&](const IVec& idx) { return pt(subset(z, idx), subset(y, idx), subset_rows(x, idx)); });
  auto r = reps[kind == IpwKind::ht ? 0 : 1];
  if (trunc.active())
    r.notes.push_back("propensity scores truncated to [" + std::to_string(trunc.lo) + ", " + std::to_string(trunc.hi) + "]");
  return r;
}

// Bins by K-quantiles of the scores (right-closed) and stratifies.
inline IVec ps_strata(const Vec& e, int K) {
  if (K < 1) throw ValidationError("number of strata must be >= 1");
  std::vector<double> q;
  for (int k = 1; k < K; ++k) q.push_back(quantile7(e, static_cast<double>(k) / K));
  IVec s(e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i)
    s[i] = static_cast<int>(std::lower_bound(q.begin(), q.end(), e[i]) - q.begin());
  return s;
}

inline EstimateReport ps_stratify(const Vec& e, const Vec& z, const Vec& y, int K = 5, double alpha = 0.05) {
  const IVec s = ps_strata(e, K);
  auto r = stratified(z, y, s, alpha);
  r.method = "ps_stratify";
  r.diagnostics["K"] = K;
  return r;
}

// Point estimates reg0, reg, ht, hajek, dr for the ATT.
inline Vec att_point(const Vec& z, const Vec& y, const Mat& x, OutcomeFamily fam = OutcomeFamily::linear,
                     double upper = 1.0) {
  Vec e = fit_pscore(x, z).scores;
  e = e.cwiseMin(upper);
  const auto oa = (e.array() / (1 - e.array())).eval();
  const Mat d = with_intercept(x);
  const Vec w0 = (1.0 - z.array()).matrix();
  const Vec m0 = fam == OutcomeFamily::logistic ? logistic_fit(d, y, w0).fitted_probabilities : wls(d, y, w0).fitted;
  const double n = static_cast<double>(z.size()), n1 = z.sum();
  const auto za = z.array(), ya = y.array();
  const double reg0 = ols(hcat({Mat::Ones(z.size(), 1), Mat(z), x}), y).coefficients[1];
  const double ybar1 = (za * ya).sum() / n1;
  const double reg = ybar1 - (za * m0.array()).sum() / n1;
  const double ht = ybar1 - (oa * (1 - za) * ya).mean() * n / n1;
  const double hajek = ybar1 - (oa * (1 - za) * ya).mean() / (oa * (1 - za)).mean();
  const double dr = reg - (oa * (1 - za) * (ya - m0.array())).mean() * n / n1;
  Vec out(5);
  out << reg0, reg, ht, hajek, dr;
  return out;
}

inline std::vector<EstimateReport> att_estimators(const Vec& z, const Vec& y, const Mat& x,
                                                  OutcomeFamily fam = OutcomeFamily::linear, double upper = 1.0,
                                                  BootSpec bs = {}, double alpha = 0.05) {
  if (!(upper > 0.0 && upper <= 1.0)) throw ValidationError("ATT truncation must lie in (0, 1]");
  const Vec point = att_point(z, y, x, fam, upper);
  return detail::boot_reports({"reg0", "reg", "ht", "hajek", "dr"}, "att", point, static_cast<int>(y.size()), bs,
                              alpha, [&](const IVec& idx) {
                                return att_point(subset(z, idx), subset(y, idx), subset_rows(x, idx), fam, upper);
                              });
}

// Coefficient of (Z - e) in OLS of Y on (1, Z - e).
inline double overlap_point(const Vec& z, const Vec& y, const Mat& x) {
  const Vec e = fit_pscore(x, z).scores;
  const Vec r = z - e;
  return ols(with_intercept(r), y).coefficients[1];
}

// Coefficient of Z in OLS of Y on (1, Z, e, X).
inline double overlap_point_augmented(const Vec& z, const Vec& y, const Mat& x) {
  const Vec e = fit_pscore(x, z).scores;
  return ols(hcat({Mat::Ones(z.size(), 1), Mat(z), Mat(e), x}), y).coefficients[1];
}

inline EstimateReport overlap_weight_tau_O(const Vec& z, const Vec& y, const Mat& x, BootSpec bs = {},
                                           double alpha = 0.05) {
  Vec point(1);
  point[0] = overlap_point(z, y, x);
  auto r = detail::boot_reports({"overlap"}, "ato", point, static_cast<int>(y.size()), bs, alpha, [&](const IVec& idx) {
    Vec v(1);
    v[0] = overlap_point(subset(z, idx), subset(y, idx), subset_rows(x, idx));
    return v;
  })[0];
  return r;
}

enum class Target { ate, att };

// Coefficient of Z in the WLS fit of Y on (1, Z, Xc, Z Xc) with Hajek weights.
inline double hajek_wls_point(const Vec& z, const Vec& y, const Mat& x, Target target, const Vec* scores = nullptr) {
  const Vec e = scores ? *scores : fit_pscore(x, z).scores;
  const auto za = z.array(), ea = e.array();
  Vec w;
  Eigen::RowVectorXd center;
  if (target == Target::ate) {
    w = (za / ea + (1 - za) / (1 - ea)).matrix();
    center = x.colwise().mean();
  } else {
    w = (za + (1 - za) * ea / (1 - ea)).matrix();
    center = Eigen::RowVectorXd::Zero(x.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      if (z[i] == 1.0) center += x.row(i);
    center /= z.sum();
  }
  const Eigen::Index n = y.size(), p = x.cols();
  Mat d(n, 2 + 2 * p);
  d.col(0).setOnes();
  d.col(1) = z;
  if (p > 0) {
    const Mat xc = center_columns(x, center);
    d.middleCols(2, p) = xc;
    d.rightCols(p) = xc.array().colwise() * z.array();
  }
  return wls(d, y, w).coefficients[1];
}

// Regression and DR estimators built from arm-wise WLS outcome fits.
struct WlsDr {
  double reg = 0, dr = 0;
};

inline WlsDr wls_dr(const Vec& z, const Vec& y, const Mat& x, const Vec& e, Target target) {
  const auto za = z.array(), ea = e.array();
  const Mat d = with_intercept(x);
  const double n = static_cast<double>(z.size()), n1 = z.sum();
  WlsDr out;
  if (target == Target::ate) {
    const Vec w1 = (za / ea).matrix(), w0 = ((1 - za) / (1 - ea)).matrix();
    const Vec m1 = wls(d, y, w1).fitted, m0 = wls(d, y, w0).fitted;
    out.reg = (m1 - m0).mean();
    out.dr = out.reg + (za * (y - m1).array() / ea).mean() - ((1 - za) * (y - m0).array() / (1 - ea)).mean();
  } else {
    const auto oa = (ea / (1 - ea)).eval();
    const Vec w0 = ((1 - za) * oa).matrix();
    const Vec m0 = wls(d, y, w0).fitted;
    out.reg = (za * y.array()).sum() / n1 - (za * m0.array()).sum() / n1;
    out.dr = out.reg - (oa * (1 - za) * (y - m0).array()).mean() * n / n1;
  }
  return out;
}

inline EstimateReport hajek_wls(const Vec& z, const Vec& y, const Mat& x, Target target, BootSpec bs = {},
                                double alpha = 0.05) {
  Vec point(1);
  point[0] = hajek_wls_point(z, y, x, target);
  auto r = detail::boot_reports({"hajek_wls"}, target == Target::ate ? "ate" : "att", point,
                                static_cast<int>(y.size()), bs, alpha, [&](const IVec& idx) {
                                  Vec v(1);
                                  v[0] = hajek_wls_point(subset(z, idx), subset(y, idx), subset_rows(x, idx), target);
                                  return v;
                                })[0];
  r.notes.push_back("bootstrap standard error; the WLS-reported standard error ignores weight estimation");
  return r;
}

enum class BalanceMethod { stratified, hajek };

struct BalanceRow {
  std::string covariate;
  EstimateReport report;
};

// Each covariate as a pseudo outcome; its true "effect" is zero. Hajek SEs use
// the linearization with the scores held fixed.
inline std::vector<BalanceRow> balance_check(const Vec& e, const Vec& z, const Mat& x,
                                             const std::vector<std::string>& names, BalanceMethod method, int K = 5,
                                             double alpha = 0.05) {
  std::vector<BalanceRow> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Vec h = x.col(j);
    EstimateReport r;
    if (method == BalanceMethod::stratified) {
      r = ps_stratify(e, z, h, K, alpha);
    } else {
      const auto za = z.array(), ea = e.array(), ha = h.array();
      const double ot = (za / ea).mean(), oc = ((1 - za) / (1 - ea)).mean();
      const double mu1 = (za * ha / ea).mean() / ot, mu0 = ((1 - za) * ha / (1 - ea)).mean() / oc;
      const Vec psi = (za * (ha - mu1) / ea / ot - (1 - za) * (ha - mu0) / (1 - ea) / oc).matrix();
      const double n = static_cast<double>(z.size());
      r = wald_report("balance_hajek", "balance", mu1 - mu0, std::sqrt(psi.squaredNorm()) / n, alpha,
                      static_cast<long>(n));
    }
    out.push_back({j < static_cast<Eigen::Index>(names.size()) ? names[j] : "x" + std::to_string(j), r});
  }
  return out;
}

// Two-period IPW for E{Y(a1, a2)}.
inline double sequential_ipw_point(const Vec& z1, const Vec& z2, const Vec& y, const Mat& x0, const Mat& x1, int a1,
                                   int a2, IpwKind kind) {
  require_binary(z1, "first-period treatment");
  require_binary(z2, "second-period treatment");
  const Eigen::Index n = y.size();
  const Vec e1 = fit_pscore(x0, z1).scores;
  Vec p2(n);
  if (z1 == z2) {
    // Second treatment copies the first: pr(Z2 = a2 | Z1 = a1) is 0 or 1.
    if (a1 != a2) throw ValidationError("target arm has probability zero when Z2 equals Z1");
    p2.setOnes();
  } else {
    const Vec e2 = fit_pscore(hcat({Mat(z1), x1, x0}), z2).scores;
    p2 = a2 == 1 ? e2 : Vec((1.0 - e2.array()).matrix());
  }
  const Vec p1 = a1 == 1 ? e1 : Vec((1.0 - e1.array()).matrix());
  double num = 0, den = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z1[i] != a1 || z2[i] != a2) continue;
    const double w = 1.0 / (p1[i] * p2[i]);
    num += w * y[i];
    den += w;
  }
  if (den == 0) throw ValidationError("no units in the target treatment path");
  return kind == IpwKind::ht ? num / static_cast<double>(n) : num / den;
}

inline EstimateReport sequential_ipw(const Vec& z1, const Vec& z2, const Vec& y, const Mat& x0, const Mat& x1,
                                     std::pair<int, int> target, IpwKind kind, BootSpec bs = {},
                                     double alpha = 0.05) {
  auto pt = [&](const IVec& idx) {
    Vec v(1);
    v[0] = sequential_ipw_point(subset(z1, idx), subset(z2, idx), subset(y, idx), subset_rows(x0, idx),
                                subset_rows(x1, idx), target.first, target.second, kind);
    return v;
  };
  Vec point(1);
  point[0] = sequential_ipw_point(z1, z2, y, x0, x1, target.first, target.second, kind);
  auto r = detail::boot_reports({kind == IpwKind::ht ? "seq_ipw_ht" : "seq_ipw_hajek"},
                                "mean_y(" + std::to_string(target.first) + "," + std::to_string(target.second) + ")",
                                point, static_cast<int>(y.size()), bs, alpha, pt)[0];
  return r;
}

}  // namespace causalkit
