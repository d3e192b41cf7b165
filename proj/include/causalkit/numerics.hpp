#pragma once

#include "core.hpp"

#include <sstream>

namespace causalkit {

struct LinearFit {
  Vec coefficients;
  Vec fitted;
  Vec residuals;
  Vec leverages;  // diagonal of the (weighted) hat matrix; 0 for zero-weight rows
  Vec weights;
  Mat model_cov;
  Mat xtx_inverse;  // (X'WX)^{-1}
  Mat design;
  double sigma2 = 0.0;
  long n_eff = 0;  // rows with positive weight
};

enum class HC { HC0, HC1, HC2, HC3 };

inline const char* hc_name(HC v) {
  switch (v) {
    case HC::HC0: return "HC0";
    case HC::HC1: return "HC1";
    case HC::HC2: return "HC2";
    case HC::HC3: return "HC3";
  }
  return "?";
}

inline HC parse_hc(const std::string& s) {
  if (s == "HC0" || s == "hc0") return HC::HC0;
  if (s == "HC1" || s == "hc1") return HC::HC1;
  if (s == "HC2" || s == "hc2") return HC::HC2;
  if (s == "HC3" || s == "hc3") return HC::HC3;
  throw ValidationError("unknown robust covariance variant: " + s);
}

namespace detail {

constexpr double kRankTol = 1e-10;

// Throws naming the first column whose inclusion makes the leading block singular.
inline void check_rank(const Mat& r) {
  const Eigen::Index p = r.cols();
  if (p == 0) return;
  Eigen::JacobiSVD<Mat> svd(r);
  const Vec sv = svd.singularValues();
  const double smax = sv.maxCoeff();
  if (smax > 0.0 && sv.minCoeff() >= kRankTol * smax) return;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::JacobiSVD<Mat> sj(r.topLeftCorner(j + 1, j + 1));
    const double m = sj.singularValues().minCoeff();
    if (!(m >= kRankTol * smax) || smax == 0.0) {
      std::ostringstream os;
      os << "singular design: column " << j << " is (numerically) a linear combination of earlier columns";
      throw SingularDesignError(os.str(), static_cast<int>(j));
    }
  }
  throw SingularDesignError("singular design", static_cast<int>(p - 1));
}

}  // namespace detail

inline LinearFit wls(const Mat& X, const Vec& y, const Vec& w) {
  require_same_length(X.rows(), y.size(), "design rows vs outcome");
  require_same_length(w.size(), y.size(), "weights vs outcome");
  const Eigen::Index n = X.rows(), p = X.cols();
  IVec support;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ValidationError("negative or non-finite weight at row " + std::to_string(i));
    if (w[i] > 0.0) support.push_back(static_cast<int>(i));
  }
  if (support.empty()) throw ValidationError("weights sum to zero");
  const auto m = static_cast<Eigen::Index>(support.size());
  if (m < p) throw SingularDesignError("fewer weighted rows than columns", static_cast<int>(m));

  Mat xs(m, p);
  Vec ys(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double s = std::sqrt(w[support[k]]);
    xs.row(k) = s * X.row(support[k]);
    ys[k] = s * y[support[k]];
  }
  Eigen::HouseholderQR<Mat> qr(xs);
  const Mat r = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  detail::check_rank(r);
  const Vec qty = qr.householderQ().transpose() * ys;
  LinearFit f;
  f.coefficients = r.triangularView<Eigen::Upper>().solve(qty.head(p));
  const Mat rinv = r.triangularView<Eigen::Upper>().solve(Mat::Identity(p, p));
  f.xtx_inverse = rinv * rinv.transpose();
  f.fitted = X * f.coefficients;
  f.residuals = y - f.fitted;
  f.weights = w;
  f.design = X;
  f.n_eff = m;
  f.leverages = Vec::Zero(n);
  const Mat xr = xs * rinv;
  for (Eigen::Index k = 0; k < m; ++k) f.leverages[support[k]] = xr.row(k).squaredNorm();
  double rss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) rss += w[i] * f.residuals[i] * f.residuals[i];
  f.sigma2 = m > p ? rss / static_cast<double>(m - p) : std::numeric_limits<double>::quiet_NaN();
  f.model_cov = f.sigma2 * f.xtx_inverse;
  return f;
}

inline LinearFit ols(const Mat& X, const Vec& y) { return wls(X, y, Vec::Ones(y.size())); }

// Sandwich covariance (X'WX)^{-1} X'W diag(adj e^2) W X (X'WX)^{-1}.
inline Mat robust_cov(const LinearFit& f, HC variant) {
  const Eigen::Index n = f.design.rows(), p = f.design.cols();
  const double df = static_cast<double>(f.n_eff) / static_cast<double>(f.n_eff - p);
  Mat s(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = f.weights[i];
    if (wi == 0.0) {
      s.row(i).setZero();
      continue;
    }
    const double h = f.leverages[i];
    double adj = 1.0;
    switch (variant) {
      case HC::HC0: break;
      case HC::HC1: adj = df; break;
      case HC::HC2:
      case HC::HC3:
        if (h > 1.0 - 1e-10)
          throw NumericError("leverage equals 1 at row " + std::to_string(i) + "; " + hc_name(variant) + " undefined");
        adj = variant == HC::HC2 ? 1.0 / (1.0 - h) : 1.0 / ((1.0 - h) * (1.0 - h));
        break;
    }
    s.row(i) = (wi * f.residuals[i] * std::sqrt(adj)) * f.design.row(i);
  }
  const Mat meat = s.transpose() * s;
  Mat v = f.xtx_inverse * meat * f.xtx_inverse;
  return 0.5 * (v + v.transpose());
}

inline double robust_se(const LinearFit& f, HC variant, Eigen::Index j) {
  return std::sqrt(robust_cov(f, variant)(j, j));
}

struct LogisticFit {
  Vec coefficients;
  Vec fitted_probabilities;
  Mat info_matrix;
  Mat cov;
  bool converged = false;
  int iterations = 0;
};

namespace detail {
inline double log1pexp(double x) { return x > 35 ? x : (x < -35 ? std::exp(x) : std::log1p(std::exp(x))); }
inline double expit(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}  // namespace detail

// Newton-Raphson with step-halving on the (weighted) Bernoulli log-likelihood.
inline LogisticFit logistic_fit(const Mat& X, const Vec& y, const Vec& w) {
  require_same_length(X.rows(), y.size(), "design rows vs outcome");
  require_same_length(w.size(), y.size(), "weights vs outcome");
  const Eigen::Index n = X.rows(), p = X.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] < 0.0) throw ValidationError("negative weight at row " + std::to_string(i));
    if (w[i] > 0.0 && y[i] != 0.0 && y[i] != 1.0) throw ValidationError("logistic outcome must be binary (row " + std::to_string(i) + ")");
  }
  {
    // rank of the weighted design
    IVec sup;
    for (Eigen::Index i = 0; i < n; ++i)
      if (w[i] > 0.0) sup.push_back(static_cast<int>(i));
    if (static_cast<Eigen::Index>(sup.size()) < p) throw SingularDesignError("fewer weighted rows than columns", 0);
    Mat xs = subset_rows(X, sup);
    Eigen::HouseholderQR<Mat> qr(xs);
    detail::check_rank(qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>());
  }
  auto loglik = [&](const Vec& b) {
    const Vec eta = X * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (w[i] > 0.0) ll += w[i] * (y[i] * eta[i] - detail::log1pexp(eta[i]));
    return ll;
  };
  LogisticFit f;
  Vec beta = Vec::Zero(p);
  double ll = loglik(beta);
  std::ostringstream trace;
  auto separated = [&](const Vec& b) {
    const Vec eta = X * b;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      const double pi = detail::expit(eta[i]);
      if (pi * (1.0 - pi) < 1e-10) return true;
    }
    return false;
  };
  for (int it = 0; it <= 100; ++it) {
    const Vec eta = X * beta;
    Vec pr(n), wv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pr[i] = detail::expit(eta[i]);
      wv[i] = w[i] * pr[i] * (1.0 - pr[i]);
    }
    const Vec score = X.transpose() * (w.array() * (y - pr).array()).matrix();
    const Mat info = X.transpose() * wv.asDiagonal() * X;
    f.iterations = it;
    trace << "iter " << it << ": loglik=" << ll << " max|score|=" << score.cwiseAbs().maxCoeff() << "\n";
    if (score.cwiseAbs().maxCoeff() < 1e-10) {
      f.converged = true;
      f.coefficients = beta;
      f.fitted_probabilities = pr;
      f.info_matrix = info;
      break;
    }
    if (it == 100) break;
    Eigen::LDLT<Mat> ldlt(info);
    const Vec step = ldlt.solve(score);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || ldlt.vectorD().minCoeff() <= 0.0) {
      if (separated(beta)) throw SeparationError("logistic fit: complete or quasi-complete separation detected");
      throw ConvergenceError("logistic fit: singular information matrix\n" + trace.str());
    }
    // Once the full Newton step is negligible the score sits at rounding level.
    if (step.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + beta.cwiseAbs().maxCoeff())) f.converged = true;
    bool accepted = false;
    double scale = 1.0;
    for (int h = 0; h <= 30; ++h, scale *= 0.5) {
      const Vec cand = beta + scale * step;
      const double llc = loglik(cand);
      if (f.converged || (std::isfinite(llc) && llc >= ll - 1e-12 * (1.0 + std::abs(ll)))) {
        beta = cand;
        ll = llc;
        accepted = true;
        break;
      }
    }
    if (beta.norm() > 1e4) throw SeparationError("logistic fit: coefficients diverge (norm > 1e4), separation");
    if (!accepted) {
      if (separated(beta)) throw SeparationError("logistic fit: separation detected");
      throw ConvergenceError("logistic fit: step-halving failed\n" + trace.str());
    }
    if (f.converged) {
      const Vec eta2 = X * beta;
      Vec pr2(n), wv2(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        pr2[i] = detail::expit(eta2[i]);
        wv2[i] = w[i] * pr2[i] * (1.0 - pr2[i]);
      }
      f.coefficients = beta;
      f.fitted_probabilities = pr2;
      f.info_matrix = X.transpose() * wv2.asDiagonal() * X;
      f.iterations = it + 1;
      break;
    }
  }
  if (!f.converged) {
    if (separated(beta)) throw SeparationError("logistic fit: separation detected (no convergence in 100 iterations)");
    throw ConvergenceError("logistic fit did not converge in 100 iterations\n" + trace.str());
  }
  // Score-converged with fitted probabilities pinned at 0 or 1 is separation, not a fit.
  if (separated(f.coefficients)) throw SeparationError("logistic fit: fitted probabilities numerically 0 or 1 (separation)");
  f.cov = f.info_matrix.ldlt().solve(Mat::Identity(p, p));
  return f;
}

inline LogisticFit logistic_fit(const Mat& X, const Vec& y) { return logistic_fit(X, y, Vec::Ones(y.size())); }

struct BootstrapResult {
  Vec replicates;
  double se = 0.0;
  double point = std::numeric_limits<double>::quiet_NaN();
  int dropped = 0;
};

struct BootstrapMultiResult {
  Mat replicates;  // kept replicates x statistics
  Vec se;
  int dropped = 0;
};

// Unit-level resampling with replacement; replicate r is driven by Rng(seed, r).
// stat returns std::nullopt (or throws NumericError) when undefined on a resample.
template <class Stat>
BootstrapMultiResult bootstrap_multi(int n, int B, std::uint64_t seed, int k, Stat&& stat) {
  if (B < 2) throw ValidationError("bootstrap requires B >= 2");
  if (n < 1) throw ValidationError("bootstrap requires data");
  std::vector<std::optional<Vec>> out(B);
  parallel_for(static_cast<std::size_t>(B), [&](std::size_t r) {
    Rng rng(seed, r);
    IVec idx(n);
    for (int i = 0; i < n; ++i) idx[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    try {
      std::optional<Vec> v = stat(idx);
      if (v && v->size() == k && v->allFinite()) out[r] = std::move(v);
    } catch (const NumericError&) {
    } catch (const ValidationError&) {
    }
  });
  BootstrapMultiResult res;
  std::vector<int> kept;
  for (int r = 0; r < B; ++r)
    if (out[r]) kept.push_back(r);
  res.dropped = B - static_cast<int>(kept.size());
  if (res.dropped > B / 10)
    throw NumericError("bootstrap: " + std::to_string(res.dropped) + " of " + std::to_string(B) +
                       " replicates undefined (more than 10%)");
  res.replicates.resize(static_cast<Eigen::Index>(kept.size()), k);
  for (std::size_t j = 0; j < kept.size(); ++j) res.replicates.row(j) = out[kept[j]]->transpose();
  res.se.resize(k);
  for (int c = 0; c < k; ++c) res.se[c] = std::sqrt(sample_var(res.replicates.col(c)));
  return res;
}

template <class Stat>
BootstrapResult bootstrap(int n, int B, std::uint64_t seed, Stat&& stat) {
  auto m = bootstrap_multi(n, B, seed, 1, [&](const IVec& idx) -> std::optional<Vec> {
    std::optional<double> v = stat(idx);
    if (!v) return std::nullopt;
    Vec out(1);
    out[0] = *v;
    return out;
  });
  BootstrapResult r;
  r.replicates = m.replicates.col(0);
  r.se = m.se[0];
  r.dropped = m.dropped;
  IVec all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  if (auto p = stat(all)) r.point = *p;
  return r;
}

// Coefficients of X1 after residualizing X1 and y on X2.
inline Vec fwl_residualize(const Mat& X1, const Mat& X2, const Vec& y) {
  require_same_length(X1.rows(), y.size(), "X1 rows vs outcome");
  require_same_length(X2.rows(), y.size(), "X2 rows vs outcome");
  Mat r1(X1.rows(), X1.cols());
  for (Eigen::Index j = 0; j < X1.cols(); ++j) r1.col(j) = ols(X2, X1.col(j)).residuals;
  const Vec ry = ols(X2, y).residuals;
  return ols(r1, ry).coefficients;
}

}  // namespace causalkit
