#pragma once

#include "core.hpp"
#include "design_estimators.hpp"
#include "numerics.hpp"

namespace causalkit {

inline constexpr double kWeakIvThreshold = 1e-8;

enum class WaldSe { delta, bootstrap };

namespace detail {

inline double diff_means(const Vec& z, const Vec& v) {
  double s1 = 0, s0 = 0, n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] == 1.0) {
      s1 += v[i];
      ++n1;
    } else {
      s0 += v[i];
      ++n0;
    }
  }
  return s1 / n1 - s0 / n0;
}

inline double neyman_var(const Vec& z, const Vec& v) {
  const IVec t = where(z, 1.0), c = where(z, 0.0);
  return sample_var(subset(v, t)) / static_cast<double>(t.size()) +
         sample_var(subset(v, c)) / static_cast<double>(c.size());
}

inline void check_iv_inputs(const Vec& z, const Vec& d, const Vec& y) {
  require_same_length(z.size(), d.size(), "instrument vs treatment received");
  require_same_length(z.size(), y.size(), "instrument vs outcome");
  require_binary(z, "instrument");
  check_arms(z, y, 2, "instrument");
}

}  // namespace detail

inline double wald_point(const Vec& z, const Vec& d, const Vec& y) {
  const double td = detail::diff_means(z, d);
  if (std::abs(td) < kWeakIvThreshold)
    throw WeakInstrumentError("effect of the instrument on treatment received is numerically zero; use the FAR confidence set");
  return detail::diff_means(z, y) / td;
}

inline EstimateReport wald(const Vec& z, const Vec& d, const Vec& y, WaldSe se_method = WaldSe::delta,
                           double alpha = 0.05, int B = 200, std::optional<std::uint64_t> seed = std::nullopt) {
  detail::check_iv_inputs(z, d, y);
  const double tc = wald_point(z, d, y);
  const double td = detail::diff_means(z, d);
  double se = 0;
  int dropped = 0;
  if (se_method == WaldSe::delta) {
    const Vec a = y - tc * d;
    se = std::sqrt(detail::neyman_var(z, a)) / std::abs(td);
  } else {
    if (!seed) throw ValidationError("bootstrap standard error needs a seed");
    const auto b = bootstrap(static_cast<int>(y.size()), B, *seed, [&](const IVec& idx) -> std::optional<double> {
      const Vec zz = subset(z, idx);
      check_arms(zz, zz, 1, "instrument");
      return wald_point(zz, subset(d, idx), subset(y, idx));
    });
    se = b.se;
    dropped = b.dropped;
  }
  auto r = wald_report("wald", "cace", tc, se, alpha, static_cast<long>(y.size()));
  r.diagnostics["tau_d"] = td;
  r.diagnostics["tau_y"] = detail::diff_means(z, y);
  if (se_method == WaldSe::bootstrap) {
    r.diagnostics["bootstrap_B"] = B;
    r.diagnostics["bootstrap_dropped"] = dropped;
  }
  return r;
}

inline double wald_adjusted_point(const Vec& z, const Vec& d, const Vec& y, const Mat& x) {
  if (x.cols() == 0) return wald_point(z, d, y);
  const double td = lin_fit(z, d, x).estimate;
  if (std::abs(td) < kWeakIvThreshold)
    throw WeakInstrumentError("adjusted effect of the instrument on treatment received is numerically zero");
  return lin_fit(z, y, x).estimate / td;
}

// Ratio of Lin estimators for Y and D; bootstrap standard error.
inline EstimateReport wald_adjusted(const Vec& z, const Vec& d, const Vec& y, const Mat& x, double alpha = 0.05,
                                    int B = 200, std::optional<std::uint64_t> seed = std::nullopt) {
  detail::check_iv_inputs(z, d, y);
  require_same_length(x.rows(), y.size(), "covariates vs outcome");
  const double est = wald_adjusted_point(z, d, y, x);
  if (!seed) throw ValidationError("bootstrap standard error needs a seed");
  const auto b = bootstrap(static_cast<int>(y.size()), B, *seed, [&](const IVec& idx) -> std::optional<double> {
    const Vec zz = subset(z, idx);
    check_arms(zz, zz, 2, "instrument");
    return wald_adjusted_point(zz, subset(d, idx), subset(y, idx), subset_rows(x, idx));
  });
  auto r = wald_report("wald_lin", "cace", est, b.se, alpha, static_cast<long>(y.size()));
  r.diagnostics["bootstrap_B"] = B;
  r.diagnostics["bootstrap_dropped"] = b.dropped;
  return r;
}

// Counts n_{zdy} in the order n111, n110, n101, n100, n011, n010, n001, n000.
struct IvCounts {
  std::array<double, 8> n{};
  double at(int z, int d, int y) const { return n[(1 - z) * 4 + (1 - d) * 2 + (1 - y)]; }
};

struct IvBinarySummary {
  double pi_c = 0, pi_n = 0, pi_a = 0;
  double mu_c1 = 0, mu_c0 = 0, mu_n1 = 0, mu_n0 = 0, mu_a1 = 0, mu_a0 = 0;
  double tau_c = 0;
  bool violation = false;  // some mu outside [0, 1]
  std::vector<std::string> warnings;
};

inline IvBinarySummary binary_iv_decompose(const IvCounts& c) {
  for (double v : c.n)
    if (!(v >= 0)) throw ValidationError("counts must be nonnegative");
  const double ntr = c.at(1, 1, 1) + c.at(1, 1, 0) + c.at(1, 0, 1) + c.at(1, 0, 0);
  const double nco = c.at(0, 1, 1) + c.at(0, 1, 0) + c.at(0, 0, 1) + c.at(0, 0, 0);
  if (ntr <= 0 || nco <= 0) throw ValidationError("both instrument arms need positive totals");
  IvBinarySummary s;
  s.pi_n = (c.at(1, 0, 1) + c.at(1, 0, 0)) / ntr;
  s.pi_a = (c.at(0, 1, 1) + c.at(0, 1, 0)) / nco;
  s.pi_c = 1 - s.pi_n - s.pi_a;
  if (s.pi_c < 0)
    s.warnings.push_back("pr(D=1|Z=1) < pr(D=1|Z=0): data contradict monotonicity");
  if (s.pi_c == 0) throw WeakInstrumentError("no compliers: pr(D=1|Z=1) equals pr(D=1|Z=0)");
  auto ratio = [](double a, double b) { return b > 0 ? a / b : std::numeric_limits<double>::quiet_NaN(); };
  const double m11 = ratio(c.at(1, 1, 1), c.at(1, 1, 1) + c.at(1, 1, 0));
  const double m10 = ratio(c.at(1, 0, 1), c.at(1, 0, 1) + c.at(1, 0, 0));
  const double m01 = ratio(c.at(0, 1, 1), c.at(0, 1, 1) + c.at(0, 1, 0));
  const double m00 = ratio(c.at(0, 0, 1), c.at(0, 0, 1) + c.at(0, 0, 0));
  s.mu_n1 = s.mu_n0 = m10;
  s.mu_a1 = s.mu_a0 = m01;
  // empty never-taker or always-taker cells contribute nothing to the mixtures
  const double an = s.pi_n > 0 ? s.pi_n * s.mu_n0 : 0.0;
  const double aa = s.pi_a > 0 ? s.pi_a * s.mu_a1 : 0.0;
  s.mu_c1 = ((s.pi_c + s.pi_a) * m11 - aa) / s.pi_c;
  s.mu_c0 = ((s.pi_c + s.pi_n) * m00 - an) / s.pi_c;
  s.tau_c = s.mu_c1 - s.mu_c0;
  for (double m : {s.mu_c1, s.mu_c0})
    if (m < 0 || m > 1) s.violation = true;
  if (s.violation) s.warnings.push_back("complier means outside [0, 1]: evidence against the IV assumptions");
  return s;
}

struct IvInequality {
  std::string q;
  double estimate = 0;
  double se = 0;
  bool negative = false;
};

inline std::vector<IvInequality> iv_inequalities(const IvCounts& c) {
  static const char* names[] = {"DY", "D(1-Y)", "(D-1)Y", "D+Y-DY"};
  auto qv = [](int k, int d, int y) -> double {
    switch (k) {
      case 0: return d * y;
      case 1: return d * (1 - y);
      case 2: return (d - 1) * y;
      default: return d + y - d * y;
    }
  };
  std::vector<IvInequality> out;
  for (int k = 0; k < 4; ++k) {
    double m[2] = {0, 0}, v[2] = {0, 0}, nn[2] = {0, 0};
    for (int z = 0; z < 2; ++z) {
      double s = 0, s2 = 0;
      for (int d = 0; d < 2; ++d)
        for (int y = 0; y < 2; ++y) {
          const double w = c.at(z, d, y), q = qv(k, d, y);
          nn[z] += w;
          s += w * q;
          s2 += w * q * q;
        }
      if (nn[z] <= 0) throw ValidationError("both instrument arms need positive totals");
      m[z] = s / nn[z];
      v[z] = nn[z] > 1 ? (s2 - nn[z] * m[z] * m[z]) / (nn[z] - 1) : 0.0;
    }
    IvInequality r;
    r.q = names[k];
    r.estimate = m[1] - m[0];
    r.se = std::sqrt(std::max(0.0, v[1] / nn[1] + v[0] / nn[0]));
    r.negative = r.estimate < 0;
    out.push_back(r);
  }
  return out;
}

struct TslsFit {
  Vec coefficients;  // [intercept, endogenous..., exogenous...]
  Mat cov;
  Vec first_stage_f;
};

// Residuals are Y - R beta with the original regressors, not the second-stage residuals.
inline TslsFit tsls_fit(const Vec& y, const Mat& d, const Mat& z, const Mat& x) {
  const Eigen::Index n = y.size(), k = d.cols(), l = z.cols();
  require_same_length(d.rows(), n, "endogenous rows vs outcome");
  require_same_length(z.rows(), n, "instrument rows vs outcome");
  if (x.cols() > 0) require_same_length(x.rows(), n, "exogenous rows vs outcome");
  if (k == 0) throw ValidationError("need at least one endogenous regressor");
  if (l < k) throw ValidationError("under-identified: fewer instruments than endogenous regressors");
  const Mat one = Mat::Ones(n, 1);
  const Mat xx = x.cols() > 0 ? Mat(x) : Mat(n, 0);
  const Mat r = hcat({one, d, xx});
  const Mat w = hcat({one, z, xx});
  const Mat base = hcat({one, xx});
  TslsFit out;
  Mat rhat = r;
  out.first_stage_f.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const LinearFit fs = ols(w, d.col(j));
    rhat.col(1 + j) = fs.fitted;
    const double rss_u = fs.residuals.squaredNorm();
    const double rss_r = ols(base, d.col(j)).residuals.squaredNorm();
    const double df = static_cast<double>(n - w.cols());
    out.first_stage_f[j] = rss_u > 0 ? ((rss_r - rss_u) / static_cast<double>(l)) / (rss_u / df)
                                     : std::numeric_limits<double>::infinity();
  }
  const LinearFit second = ols(rhat, y);
  out.coefficients = second.coefficients;
  const Vec eps = y - r * out.coefficients;
  const Mat bread = second.xtx_inverse;
  const Mat s = rhat.array().colwise() * eps.array();
  out.cov = bread * (s.transpose() * s) * bread;
  return out;
}

inline std::vector<EstimateReport> tsls(const Vec& y, const Mat& d, const Mat& z, const Mat& x, double alpha = 0.05,
                                        const std::vector<std::string>& names = {}) {
  const TslsFit f = tsls_fit(y, d, z, x);
  std::vector<EstimateReport> out;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    auto r = wald_report("tsls", j < static_cast<Eigen::Index>(names.size()) ? names[j] : "beta_d" + std::to_string(j),
                         f.coefficients[1 + j], std::sqrt(f.cov(1 + j, 1 + j)), alpha, static_cast<long>(y.size()));
    r.diagnostics["first_stage_F"] = f.first_stage_f[j];
    if (f.first_stage_f[j] < 10) r.notes.push_back("first-stage F below 10: weak instrument, prefer the FAR confidence set");
    out.push_back(std::move(r));
  }
  return out;
}

// Ratio of the reduced-form coefficients of z.
inline EstimateReport ils(const Vec& y, const Vec& d, const Vec& z, const Mat& x, double alpha = 0.05) {
  const Eigen::Index n = y.size();
  const Mat xx = x.cols() > 0 ? Mat(x) : Mat(n, 0);
  const Mat w = hcat({Mat::Ones(n, 1), Mat(z), xx});
  const double gamma1 = ols(w, d).coefficients[1];
  const double big_gamma1 = ols(w, y).coefficients[1];
  const double scale = std::max(1.0, std::sqrt(sample_var(d) / std::max(sample_var(z), 1e-300)));
  if (std::abs(gamma1) < kWeakIvThreshold * scale)
    throw WeakInstrumentError("first-stage coefficient of the instrument is numerically zero");
  const double est = big_gamma1 / gamma1;
  const TslsFit f = tsls_fit(y, Mat(d), Mat(z), xx);
  auto r = wald_report("ils", "beta_d", est, std::sqrt(f.cov(1, 1)), alpha, static_cast<long>(n));
  r.diagnostics["gamma1"] = gamma1;
  r.diagnostics["Gamma1"] = big_gamma1;
  return r;
}

// Control function: OLS of Y on (1, D, X, first-stage residual). Point only;
// its naive standard error ignores the generated regressor.
inline double control_function_point(const Vec& y, const Mat& d, const Mat& z, const Mat& x) {
  const Eigen::Index n = y.size();
  const Mat xx = x.cols() > 0 ? Mat(x) : Mat(n, 0);
  const Mat w = hcat({Mat::Ones(n, 1), z, xx});
  Mat v(n, d.cols());
  for (Eigen::Index j = 0; j < d.cols(); ++j) v.col(j) = ols(w, d.col(j)).residuals;
  return ols(hcat({Mat::Ones(n, 1), d, xx, v}), y).coefficients[1];
}

enum class FarMode { cre, cre_covariates, linear_iv };
enum class FarShape { interval, two_intervals, empty, whole_line };

inline const char* far_shape_name(FarShape s) {
  switch (s) {
    case FarShape::interval: return "interval";
    case FarShape::two_intervals: return "two_intervals";
    case FarShape::empty: return "empty";
    case FarShape::whole_line: return "whole_line";
  }
  return "?";
}

struct FarSet {
  std::vector<double> grid;
  std::vector<double> p_values;
  std::vector<Interval> set;  // maximal runs of grid points with p >= alpha
  FarShape shape = FarShape::empty;
  bool touches_grid_edge = false;
  double point = std::numeric_limits<double>::quiet_NaN();  // argmax p
};

inline double far_pvalue(const Vec& z, const Vec& d, const Vec& y, const Mat& x, double b, FarMode mode,
                         HC hc = HC::HC3) {
  const Vec a = y - b * d;
  double t = 0;
  switch (mode) {
    case FarMode::cre:
      t = detail::diff_means(z, a) / std::sqrt(detail::neyman_var(z, a));
      break;
    case FarMode::cre_covariates: {
      const LinFit lf = lin_fit(z, a, x, hc);
      t = lf.estimate / std::sqrt(lf.var_super);
      break;
    }
    case FarMode::linear_iv: {
      const Eigen::Index n = y.size();
      const LinearFit f = ols(hcat({Mat::Ones(n, 1), Mat(z), x.cols() > 0 ? Mat(x) : Mat(n, 0)}), a);
      t = f.coefficients[1] / robust_se(f, hc, 1);
      break;
    }
  }
  return two_sided_p(t);
}

inline std::vector<double> linspace(double lo, double hi, int points) {
  if (points < 1) throw ValidationError("grid needs at least one point");
  if (points == 1) return {lo};
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k) g[k] = lo + (hi - lo) * k / (points - 1);
  return g;
}

inline FarSet far_confidence_set(const Vec& z, const Vec& d, const Vec& y, const Mat& x,
                                 const std::vector<double>& grid, double alpha = 0.05, FarMode mode = FarMode::cre,
                                 HC hc = HC::HC3) {
  if (grid.empty()) throw ValidationError("empty FAR grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("grid must be strictly increasing");
  detail::check_iv_inputs(z, d, y);
  FarSet s;
  s.grid = grid;
  s.p_values.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) { s.p_values[k] = far_pvalue(z, d, y, x, grid[k], mode, hc); });
  std::size_t best = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (s.p_values[k] > s.p_values[best]) best = k;
    if (s.p_values[k] >= alpha) {
      if (k == 0 || s.p_values[k - 1] < alpha) s.set.push_back({grid[k], grid[k]});
      s.set.back().hi = grid[k];
    }
  }
  s.point = grid[best];
  if (s.set.empty()) {
    s.shape = FarShape::empty;
  } else {
    s.touches_grid_edge = s.p_values.front() >= alpha || s.p_values.back() >= alpha;
    if (s.set.size() == 1 && s.set[0].lo == grid.front() && s.set[0].hi == grid.back() && grid.size() > 1)
      s.shape = FarShape::whole_line;
    else
      s.shape = s.set.size() == 1 ? FarShape::interval : FarShape::two_intervals;
  }
  return s;
}

// Default grid: Wald estimate +/- 10 delta standard errors, 401 points.
inline std::vector<double> far_default_grid(const Vec& z, const Vec& d, const Vec& y) {
  const auto w = wald(z, d, y);
  return linspace(w.estimate - 10 * w.se, w.estimate + 10 * w.se, 401);
}

enum class MrVariant { full, outcome_se_only };

inline EstimateReport mr_fixed_effect(const Vec& gamma, const Vec& se_d, const Vec& big_gamma, const Vec& se_y,
                                      MrVariant variant = MrVariant::full, double alpha = 0.05) {
  const Eigen::Index p = gamma.size();
  if (se_d.size() != p || big_gamma.size() != p || se_y.size() != p)
    throw ValidationError("summary statistic vectors must have equal lengths");
  if (p == 0) throw ValidationError("no instruments");
  double num = 0, den = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(se_y[j] > 0) || !(se_d[j] > 0)) throw ValidationError("standard errors must be positive");
    if (gamma[j] == 0.0) throw ValidationError("a first-stage coefficient is zero");
    const double bj = big_gamma[j] / gamma[j];
    const double v = variant == MrVariant::full ? (se_y[j] * se_y[j] + bj * bj * se_d[j] * se_d[j]) / (gamma[j] * gamma[j])
                                                : se_y[j] * se_y[j] / (gamma[j] * gamma[j]);
    num += bj / v;
    den += 1 / v;
  }
  auto r = wald_report(variant == MrVariant::full ? "mr_fixed_effect_full" : "mr_fixed_effect_outcome_se", "beta",
                       num / den, std::sqrt(1 / den), alpha, static_cast<long>(p));
  return r;
}

struct EggerReport {
  EstimateReport slope;
  std::optional<EstimateReport> intercept;
};

// WLS of Gamma on gamma; model-based standard errors. Default weights 1/se_y^2.
inline EggerReport mr_egger(const Vec& gamma, const Vec& big_gamma, const Vec& weights, bool with_intercept_term,
                            double alpha = 0.05) {
  const Eigen::Index p = gamma.size();
  if (big_gamma.size() != p || weights.size() != p) throw ValidationError("summary statistic vectors must have equal lengths");
  if (with_intercept_term && p < 2) throw ValidationError("Egger regression with intercept needs at least 2 instruments");
  if (p < 1) throw ValidationError("no instruments");
  const Mat design = with_intercept_term ? with_intercept(Mat(gamma)) : Mat(gamma);
  const LinearFit f = wls(design, big_gamma, weights);
  const Eigen::Index js = with_intercept_term ? 1 : 0;
  EggerReport out;
  out.slope = wald_report("mr_egger", "beta", f.coefficients[js], std::sqrt(f.model_cov(js, js)), alpha, static_cast<long>(p));
  if (with_intercept_term)
    out.intercept = wald_report("mr_egger", "intercept", f.coefficients[0], std::sqrt(f.model_cov(0, 0)), alpha,
                                static_cast<long>(p));
  return out;
}

}  // namespace causalkit
