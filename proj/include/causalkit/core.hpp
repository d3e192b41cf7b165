#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace causalkit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = std::vector<int>;

// Errors. ValidationError maps to CLI exit 1, NumericError to exit 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct SingularDesignError : NumericError {
  int column;
  SingularDesignError(const std::string& msg, int col) : NumericError(msg), column(col) {}
};
struct SeparationError : NumericError {
  using NumericError::NumericError;
};
struct ConvergenceError : NumericError {
  using NumericError::NumericError;
};
struct WeakInstrumentError : NumericError {
  using NumericError::NumericError;
};

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile: p must lie in (0,1)");
  static const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
  return boost::math::quantile(std_normal, p);
}

// Upper-tail two-sided p-value for a z statistic.
inline double two_sided_p(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

struct Interval {
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
};

struct EstimateReport {
  std::string method;
  std::string estimand;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> p_value;
  long n = 0;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> notes;
};

// Wald-type report: ci = estimate -/+ z_{1-alpha/2} se, p from the z statistic.
inline EstimateReport wald_report(std::string method, std::string estimand, double est, double se,
                                  double alpha, long n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
  EstimateReport r;
  r.method = std::move(method);
  r.estimand = std::move(estimand);
  r.estimate = est;
  r.se = se;
  r.n = n;
  const double q = normal_quantile(1.0 - alpha / 2.0);
  r.ci_lo = est - q * se;
  r.ci_hi = est + q * se;
  if (se > 0.0 && std::isfinite(se)) r.p_value = two_sided_p(est / se);
  return r;
}

// Counter-based generator: the stream for (seed, index) is fixed, so replicate r
// draws the same numbers no matter which thread runs it or in what order.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t index = 0)
      : state_(mix(seed ^ mix(index + 0x632BE59BD9B4E019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return nd_(*this); }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(*this);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> nd_{0.0, 1.0};
};

inline unsigned& thread_setting() {
  static unsigned n = 0;
  return n;
}

inline void set_threads(unsigned n) { thread_setting() = n; }

inline unsigned thread_count() {
  if (thread_setting() > 0) return thread_setting();
  if (const char* env = std::getenv("CAUSALKIT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

// Static partition of [0, n); fn(i) must only write to slot i.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t nt = std::min<std::size_t>(thread_count(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(nt);
  const std::size_t chunk = (n + nt - 1) / nt;
  for (std::size_t t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      try {
        const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// Small descriptive helpers used throughout.
inline double mean(const Vec& v) { return v.size() ? v.mean() : std::numeric_limits<double>::quiet_NaN(); }

inline double sample_var(const Vec& v) {
  const auto n = v.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(n - 1);
}

inline double sample_cov(const Vec& a, const Vec& b) {
  const auto n = a.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / static_cast<double>(n - 1);
}

inline Vec subset(const Vec& v, const IVec& idx) {
  Vec out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

inline Mat subset_rows(const Mat& m, const IVec& idx) {
  Mat out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

inline IVec where(const Vec& z, double value) {
  IVec idx;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z[i] == value) idx.push_back(static_cast<int>(i));
  return idx;
}

inline void require_binary(const Vec& z, const char* what) {
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z[i] != 0.0 && z[i] != 1.0)
      throw ValidationError(std::string(what) + " must be binary 0/1 (row " + std::to_string(i) + ")");
}

inline void require_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw ValidationError(std::string("length mismatch: ") + what);
}

// Average ranks (1-based) with ties sharing their mean rank.
inline Vec midranks(const Vec& v) {
  const auto n = v.size();
  std::vector<int> ord(n);
  for (int i = 0; i < n; ++i) ord[i] = i;
  std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return v[a] < v[b]; });
  Vec r(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v[ord[j + 1]] == v[ord[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) r[ord[k]] = avg;
    i = j + 1;
  }
  return r;
}

// Sample quantile, type 7 (linear interpolation between order statistics).
inline double quantile7(Vec v, double p) {
  if (v.size() == 0) throw ValidationError("quantile of empty vector");
  std::sort(v.data(), v.data() + v.size());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min<Eigen::Index>(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Mat with_intercept(const Mat& x) {
  Mat out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

inline Mat hcat(std::initializer_list<Mat> blocks) {
  Eigen::Index rows = -1, cols = 0;
  for (const auto& b : blocks) {
    if (rows < 0) rows = b.rows();
    if (b.rows() != rows) throw ValidationError("hcat: row mismatch");
    cols += b.cols();
  }
  Mat out(std::max<Eigen::Index>(rows, 0), cols);
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  return out;
}

inline Mat center_columns(const Mat& x, const Eigen::RowVectorXd& at) {
  return x.rowwise() - at;
}

inline Mat center_columns(const Mat& x) {
  if (x.rows() == 0) return x;
  return center_columns(x, x.colwise().mean());
}

// Column-wise covariance with n-1 denominator.
inline Mat sample_cov_matrix(const Mat& x) {
  const Mat c = center_columns(x);
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

}  // namespace causalkit
