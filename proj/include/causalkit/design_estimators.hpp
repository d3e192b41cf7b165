#pragma once

#include "core.hpp"
#include "numerics.hpp"

namespace causalkit {

// Finite-population quantities of a fixed potential-outcome table.
struct SimTruth {
  Vec y1, y0;

  double tau() const { return (y1 - y0).mean(); }
  double s2_1() const { return sample_var(y1); }
  double s2_0() const { return sample_var(y0); }
  double s_10() const { return sample_cov(y1, y0); }
  double s2_tau() const { return sample_var(y1 - y0); }
  // Exact variance of the difference in means under CRE(n1, n0).
  double var_diff_means(int n1, int n0) const {
    const double n = n1 + n0;
    return s2_1() / n1 + s2_0() / n0 - s2_tau() / n;
  }
  Vec observed(const Vec& z) const { return (z.array() * y1.array() + (1 - z.array()) * y0.array()).matrix(); }
};

inline void check_arms(const Vec& z, const Vec& y, int min_per_arm, const char* what) {
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_binary(z, "treatment");
  const double n1 = z.sum(), n0 = static_cast<double>(z.size()) - n1;
  if (n1 < min_per_arm || n0 < min_per_arm)
    throw ValidationError(std::string(what) + " needs at least " + std::to_string(min_per_arm) + " units per arm");
}

inline EstimateReport neyman_cre(const Vec& z, const Vec& y, double alpha = 0.05) {
  check_arms(z, y, 2, "Neyman variance");
  const Vec y1 = subset(y, where(z, 1.0)), y0 = subset(y, where(z, 0.0));
  const double est = y1.mean() - y0.mean();
  const double v = sample_var(y1) / y1.size() + sample_var(y0) / y0.size();
  auto r = wald_report("neyman", "ate", est, std::sqrt(v), alpha, static_cast<long>(y.size()));
  r.diagnostics["n1"] = static_cast<double>(y1.size());
  r.diagnostics["n0"] = static_cast<double>(y0.size());
  return r;
}

// n^{-1} (sqrt(n0/n1) S(1) + sqrt(n1/n0) S(0))^2
inline double neyman_alt_variance(const Vec& z, const Vec& y) {
  check_arms(z, y, 2, "Neyman variance");
  const Vec y1 = subset(y, where(z, 1.0)), y0 = subset(y, where(z, 0.0));
  const double n1 = static_cast<double>(y1.size()), n0 = static_cast<double>(y0.size()), n = n1 + n0;
  const double s = std::sqrt(n0 / n1) * std::sqrt(sample_var(y1)) + std::sqrt(n1 / n0) * std::sqrt(sample_var(y0));
  return s * s / n;
}

struct StratumSummary {
  int label = 0;
  int n1 = 0, n0 = 0;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  bool dropped = false;
};

struct StratifiedReport {
  EstimateReport overall;
  std::vector<StratumSummary> strata;
};

enum class SmallStratum { error, drop };

inline StratifiedReport stratified_detail(const Vec& z, const Vec& y, const IVec& strata, double alpha = 0.05,
                                          SmallStratum policy = SmallStratum::error) {
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  require_same_length(static_cast<Eigen::Index>(strata.size()), y.size(), "strata vs outcome");
  require_binary(z, "treatment");
  std::map<int, IVec> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(static_cast<int>(i));
  StratifiedReport rep;
  std::string bad;
  double total = 0;
  for (const auto& [label, idx] : groups) {
    StratumSummary s;
    s.label = label;
    const Vec zk = subset(z, idx), yk = subset(y, idx);
    s.n1 = static_cast<int>(zk.sum());
    s.n0 = static_cast<int>(zk.size()) - s.n1;
    if (s.n1 < 2 || s.n0 < 2) {
      if (policy == SmallStratum::error) {
        bad += (bad.empty() ? "" : ", ") + std::to_string(label) + " (n1=" + std::to_string(s.n1) +
               ", n0=" + std::to_string(s.n0) + ")";
      }
      s.dropped = true;
    } else {
      const auto r = neyman_cre(zk, yk, alpha);
      s.estimate = r.estimate;
      s.se = r.se;
      total += static_cast<double>(idx.size());
    }
    rep.strata.push_back(s);
  }
  if (!bad.empty())
    throw ValidationError("strata need at least 2 treated and 2 control units: " + bad +
                          "; drop them explicitly or use the matched-pairs estimator");
  if (total == 0) throw ValidationError("no stratum supports estimation");
  double est = 0, v = 0;
  int used = 0;
  for (const auto& s : rep.strata) {
    if (s.dropped) continue;
    const double pk = (s.n1 + s.n0) / total;
    est += pk * s.estimate;
    v += pk * pk * s.se * s.se;
    ++used;
  }
  long n_used = static_cast<long>(total);
  rep.overall = wald_report("stratified", "ate", est, std::sqrt(v), alpha, n_used);
  rep.overall.diagnostics["strata_used"] = used;
  rep.overall.diagnostics["strata_dropped"] = static_cast<double>(rep.strata.size()) - used;
  for (const auto& s : rep.strata) {
    const std::string k = "stratum_" + std::to_string(s.label);
    if (s.dropped) {
      rep.overall.notes.push_back(k + " dropped (arm with fewer than 2 units); weights renormalized");
      continue;
    }
    rep.overall.diagnostics[k + "_estimate"] = s.estimate;
    rep.overall.diagnostics[k + "_se"] = s.se;
  }
  return rep;
}

inline EstimateReport stratified(const Vec& z, const Vec& y, const IVec& strata, double alpha = 0.05,
                                 SmallStratum policy = SmallStratum::error) {
  return stratified_detail(z, y, strata, alpha, policy).overall;
}

enum class Population { finite, super };

struct LinFit {
  LinearFit fit;
  double estimate = 0;
  double var_ehw = 0;
  double var_super = 0;
};

// Fully interacted OLS of y on (1, z, Xc, z Xc) with Xc centered at `center`.
inline LinFit lin_fit(const Vec& z, const Vec& y, const Mat& x, HC hc = HC::HC2) {
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  const Eigen::Index n = y.size(), p = x.cols();
  const Mat xc = p > 0 ? center_columns(x) : Mat(n, 0);
  Mat d(n, 2 + 2 * p);
  d.col(0).setOnes();
  d.col(1) = z;
  if (p > 0) {
    d.middleCols(2, p) = xc;
    d.rightCols(p) = xc.array().colwise() * z.array();
  }
  LinFit lf;
  lf.fit = ols(d, y);
  lf.estimate = lf.fit.coefficients[1];
  lf.var_ehw = robust_cov(lf.fit, hc)(1, 1);
  lf.var_super = lf.var_ehw;
  if (p > 0) {
    const Vec inter = lf.fit.coefficients.tail(p);
    lf.var_super += inter.dot(sample_cov_matrix(x) * inter) / static_cast<double>(n);
  }
  return lf;
}

inline EstimateReport lin_adjust(const Vec& z, const Vec& y, const Mat& x, Population pop = Population::finite,
                                 double alpha = 0.05, HC hc = HC::HC2) {
  check_arms(z, y, 2, "Lin estimator");
  if (x.cols() == 0) {
    auto r = neyman_cre(z, y, alpha);
    r.method = "lin";
    return r;
  }
  require_same_length(x.rows(), y.size(), "covariates vs outcome");
  const LinFit lf = lin_fit(z, y, x, hc);
  const double v = pop == Population::super ? lf.var_super : lf.var_ehw;
  auto r = wald_report("lin", "ate", lf.estimate, std::sqrt(v), alpha, static_cast<long>(y.size()));
  r.diagnostics["se_ehw"] = std::sqrt(lf.var_ehw);
  r.diagnostics["se_super"] = std::sqrt(lf.var_super);
  r.notes.push_back(std::string("robust covariance ") + hc_name(hc) +
                    (pop == Population::super ? " plus super-population correction" : ""));
  return r;
}

inline EstimateReport gain_score(const Vec& z, const Vec& y, const Vec& x_lag, double alpha = 0.05) {
  require_same_length(x_lag.size(), y.size(), "lagged outcome vs outcome");
  auto r = neyman_cre(z, y - x_lag, alpha);
  r.method = "gain";
  return r;
}

struct MpeReport {
  EstimateReport estimate;
  std::optional<Vec> slopes;  // coefficients of the covariate differences when adjusted
};

// Matched pairs from within-pair differences (treated minus control).
inline EstimateReport mpe(const Vec& diffs, const Mat& xdiffs = Mat(), double alpha = 0.05) {
  const Eigen::Index n = diffs.size();
  const Eigen::Index p = xdiffs.rows() == n ? xdiffs.cols() : 0;
  if (n < p + 2) throw ValidationError("matched-pairs estimator needs at least " + std::to_string(p + 2) + " pairs");
  if (p == 0) {
    auto r = wald_report("mpe", "ate", diffs.mean(), std::sqrt(sample_var(diffs) / static_cast<double>(n)), alpha,
                         static_cast<long>(n));
    r.diagnostics["pairs"] = static_cast<double>(n);
    return r;
  }
  const LinearFit f = ols(with_intercept(xdiffs), diffs);
  auto r = wald_report("mpe_adjusted", "ate", f.coefficients[0], std::sqrt(f.model_cov(0, 0)), alpha,
                       static_cast<long>(n));
  r.diagnostics["pairs"] = static_cast<double>(n);
  for (Eigen::Index j = 0; j < p; ++j) {
    r.diagnostics["slope_" + std::to_string(j)] = f.coefficients[j + 1];
    r.diagnostics["slope_se_" + std::to_string(j)] = std::sqrt(f.model_cov(j + 1, j + 1));
  }
  r.notes.push_back("model-based standard error for the intercept");
  return r;
}

// Unbiased estimator of cov(tau_hat_X, tau_hat) in the MPE.
inline Vec mpe_covariance(const Vec& diffs, const Mat& xdiffs) {
  const double n = static_cast<double>(diffs.size());
  const Vec dc = diffs.array() - diffs.mean();
  return center_columns(xdiffs).transpose() * dc / (n * (n - 1));
}

inline EstimateReport matched_sets_weighted(const Vec& tau, const Vec& w, double alpha = 0.05) {
  require_same_length(tau.size(), w.size(), "set estimates vs weights");
  if (tau.size() < 2) throw ValidationError("weighted matched-set estimator needs at least two sets");
  if (std::abs(w.sum() - 1.0) > 1e-9) throw ValidationError("matched-set weights must sum to 1");
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!(w[i] >= 0.0) || w[i] >= 0.5)
      throw ValidationError("matched-set weight " + std::to_string(i) + " must lie in [0, 1/2)");
  const double est = w.dot(tau);
  const Vec a = w.array().square() / (1.0 - 2.0 * w.array());
  const Vec c = a / (1.0 + a.sum());
  const double v = (c.array() * (tau.array() - est).square()).sum();
  return wald_report("matched_sets", "ate", est, std::sqrt(v), alpha, static_cast<long>(tau.size()));
}

// Lin's estimator within strata, combined with stratum proportions.
inline EstimateReport lin_sre(const Vec& z, const Vec& y, const Mat& x, const IVec& strata, double alpha = 0.05,
                              HC hc = HC::HC2) {
  require_same_length(static_cast<Eigen::Index>(strata.size()), y.size(), "strata vs outcome");
  std::map<int, IVec> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(static_cast<int>(i));
  const double n = static_cast<double>(y.size());
  double est = 0, v = 0;
  std::string bad;
  std::vector<std::pair<int, std::pair<double, double>>> parts;
  for (const auto& [label, idx] : groups) {
    const Vec zk = subset(z, idx), yk = subset(y, idx);
    const Mat xk = x.cols() > 0 ? subset_rows(x, idx) : Mat(static_cast<Eigen::Index>(idx.size()), 0);
    const double n1 = zk.sum(), n0 = static_cast<double>(idx.size()) - n1;
    if (n1 < x.cols() + 2 || n0 < x.cols() + 2) {
      bad += (bad.empty() ? "" : ", ") + std::to_string(label);
      continue;
    }
    double ek, vk;
    if (x.cols() == 0) {
      const auto r = neyman_cre(zk, yk, alpha);
      ek = r.estimate;
      vk = r.se * r.se;
    } else {
      const LinFit lf = lin_fit(zk, yk, xk, hc);
      ek = lf.estimate;
      vk = lf.var_ehw;
    }
    const double pk = static_cast<double>(idx.size()) / n;
    est += pk * ek;
    v += pk * pk * vk;
    parts.push_back({label, {ek, std::sqrt(vk)}});
  }
  if (!bad.empty()) throw ValidationError("strata too small for within-stratum regression adjustment: " + bad);
  auto r = wald_report("lin_sre", "ate", est, std::sqrt(v), alpha, static_cast<long>(y.size()));
  for (const auto& [label, es] : parts) {
    r.diagnostics["stratum_" + std::to_string(label) + "_estimate"] = es.first;
    r.diagnostics["stratum_" + std::to_string(label) + "_se"] = es.second;
  }
  return r;
}

}  // namespace causalkit
