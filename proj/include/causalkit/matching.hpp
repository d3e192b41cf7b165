#pragma once

#include "core.hpp"
#include "numerics.hpp"

namespace causalkit {

enum class Metric { euclidean, mahalanobis };
enum class MatchTarget { ate, att };

inline Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "mahalanobis") return Metric::mahalanobis;
  throw ValidationError("unknown metric: " + s);
}

struct MatchResult {
  std::vector<IVec> matches;  // J_i; empty for controls under ATT
  IVec usage;                 // K_i
  int M = 1;
  Metric metric = Metric::euclidean;
  MatchTarget target = MatchTarget::ate;
};

namespace detail {

// Rows transformed so that Euclidean distance equals the requested metric.
inline Mat metric_space(const Mat& x, Metric metric) {
  if (metric == Metric::euclidean) return x;
  if (x.rows() < 2) throw ValidationError("Mahalanobis metric needs at least two rows");
  const Mat s = sample_cov_matrix(x);
  Eigen::LLT<Mat> llt(s);
  const double scale = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() < 1e-7 * std::sqrt(scale))
    throw SingularDesignError("singular covariance matrix for Mahalanobis distance", -1);
  // d^2 = (a-b)' S^{-1} (a-b) = |L^{-1}(a-b)|^2
  return llt.matrixL().solve(x.transpose()).transpose();
}

}  // namespace detail

inline MatchResult match_nn(const Mat& x, const Vec& z, int M, Metric metric, MatchTarget target) {
  require_same_length(x.rows(), z.size(), "covariates vs treatment");
  require_binary(z, "treatment");
  if (M < 1) throw ValidationError("M must be >= 1");
  const IVec treated = where(z, 1.0), control = where(z, 0.0);
  if (static_cast<int>(control.size()) < M) throw ValidationError("control arm smaller than M");
  if (target == MatchTarget::ate && static_cast<int>(treated.size()) < M)
    throw ValidationError("treated arm smaller than M");
  const Mat u = detail::metric_space(x, metric);
  const Eigen::Index n = x.rows();
  MatchResult r;
  r.M = M;
  r.metric = metric;
  r.target = target;
  r.matches.assign(n, {});
  r.usage.assign(n, 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    if (target == MatchTarget::att && z[i] == 0.0) return;
    const IVec& pool = z[i] == 1.0 ? control : treated;
    std::vector<std::pair<double, int>> d;
    d.reserve(pool.size());
    for (int k : pool) d.emplace_back((u.row(i) - u.row(k)).squaredNorm(), k);
    // pair ordering = (distance, index): lowest index wins ties
    std::partial_sort(d.begin(), d.begin() + M, d.end());
    IVec j(M);
    for (int m = 0; m < M; ++m) j[m] = d[m].second;
    r.matches[i] = std::move(j);
  });
  for (const auto& j : r.matches)
    for (int k : j) ++r.usage[k];
  return r;
}

struct MatchingDetail {
  double tau_m = 0;
  double tau_mbc = 0;
  double tau_reg = 0;
  double bias = 0;
  Vec psi;
  Vec mu1, mu0;
};

// Point estimates and psi for ATE; psi_T for ATT.
inline MatchingDetail matching_detail(const Mat& x, const Vec& z, const Vec& y, const MatchResult& mr) {
  const Eigen::Index n = y.size();
  const double M = mr.M;
  const Mat d = with_intercept(x);
  MatchingDetail out;
  out.mu0 = wls(d, y, (1.0 - z.array()).matrix()).fitted;
  out.mu1 = mr.target == MatchTarget::ate ? wls(d, y, z).fitted : Vec(Vec::Zero(n));
  out.psi.resize(n);
  if (mr.target == MatchTarget::ate) {
    double sm = 0, sb = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool t = z[i] == 1.0;
      const Vec& mu_other = t ? out.mu0 : out.mu1;
      double imp = 0, b = 0;
      for (int k : mr.matches[i]) {
        imp += y[k];
        b += mu_other[i] - mu_other[k];
      }
      imp /= M;
      b /= M;
      sm += t ? y[i] - imp : imp - y[i];
      sb += t ? b : -b;
      const double res = y[i] - (t ? out.mu1[i] : out.mu0[i]);
      out.psi[i] = out.mu1[i] - out.mu0[i] + (t ? 1.0 : -1.0) * (1.0 + mr.usage[i] / M) * res;
    }
    out.tau_m = sm / n;
    out.bias = sb / n;
    out.tau_reg = (out.mu1 - out.mu0).mean();
  } else {
    const double n1 = z.sum();
    double sm = 0, sb = 0, sr = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double res0 = y[i] - out.mu0[i];
      if (z[i] == 1.0) {
        double imp = 0, b = 0;
        for (int k : mr.matches[i]) {
          imp += y[k];
          b += out.mu0[i] - out.mu0[k];
        }
        sm += y[i] - imp / M;
        sb += b / M;
        sr += res0;
        out.psi[i] = res0;
      } else {
        out.psi[i] = -(mr.usage[i] / M) * res0;
      }
    }
    out.tau_m = sm / n1;
    out.bias = sb / n1;
    out.tau_reg = sr / n1;
  }
  out.tau_mbc = out.tau_m - out.bias;
  return out;
}

inline EstimateReport matching_estimate(const Mat& x, const Vec& z, const Vec& y, int M, Metric metric,
                                        MatchTarget target, bool bias_correct, double alpha = 0.05) {
  require_same_length(z.size(), y.size(), "treatment vs outcome");
  const MatchResult mr = match_nn(x, z, M, metric, target);
  const MatchingDetail md = matching_detail(x, z, y, mr);
  const double est = bias_correct ? md.tau_mbc : md.tau_m;
  const double n = static_cast<double>(y.size());
  double v = 0;
  if (target == MatchTarget::ate) {
    v = (md.psi.array() - est).square().sum() / (n * n);
  } else {
    const double n1 = z.sum();
    v = (md.psi.array() - est * n1 / n).square().sum() / (n1 * n1);
  }
  auto r = wald_report(bias_correct ? "matching_bc" : "matching", target == MatchTarget::ate ? "ate" : "att", est,
                       std::sqrt(v), alpha, static_cast<long>(n));
  r.diagnostics["M"] = M;
  r.diagnostics["bias_estimate"] = md.bias;
  r.diagnostics["tau_reg"] = md.tau_reg;
  r.diagnostics["units_used_as_matches"] = static_cast<double>(
      std::count_if(mr.usage.begin(), mr.usage.end(), [](int k) { return k > 0; }));
  if (!bias_correct) r.notes.push_back("standard error from the bias-corrected linear expansion");
  return r;
}

}  // namespace causalkit
