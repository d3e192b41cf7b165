#pragma once

#include "core.hpp"

namespace causalkit {

// Rows: treatment 1/0. Columns: outcome 1/0.
struct TwoByTwo {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;

  double n1() const { return n11 + n10; }
  double n0() const { return n01 + n00; }
  double n() const { return n11 + n10 + n01 + n00; }

  TwoByTwo operator+(const TwoByTwo& o) const { return {n11 + o.n11, n10 + o.n10, n01 + o.n01, n00 + o.n00}; }
};

struct RiskMeasures {
  double rd = std::numeric_limits<double>::quiet_NaN();
  double rr = std::numeric_limits<double>::quiet_NaN();
  double or_ = std::numeric_limits<double>::quiet_NaN();
  double se_rd = std::numeric_limits<double>::quiet_NaN();
  double se_log_rr = std::numeric_limits<double>::quiet_NaN();
  double se_log_or = std::numeric_limits<double>::quiet_NaN();
  Interval ci_rd, ci_rr, ci_or;
  std::vector<std::string> flags;
};

inline void check_table(const TwoByTwo& t) {
  for (double c : {t.n11, t.n10, t.n01, t.n00})
    if (!(c >= 0.0) || !std::isfinite(c)) throw ValidationError("2x2 counts must be finite and nonnegative");
  if (t.n() <= 0.0) throw ValidationError("2x2 table is empty");
}

inline RiskMeasures risk_measures(const TwoByTwo& t, double alpha = 0.05) {
  check_table(t);
  if (t.n1() <= 0.0 || t.n0() <= 0.0) throw ValidationError("both treatment rows need positive totals");
  RiskMeasures m;
  const double q = normal_quantile(1.0 - alpha / 2.0);
  const double p1 = t.n11 / t.n1(), p0 = t.n01 / t.n0();
  m.rd = p1 - p0;
  m.se_rd = std::sqrt(p1 * (1 - p1) / t.n1() + p0 * (1 - p0) / t.n0());
  m.ci_rd = {m.rd - q * m.se_rd, m.rd + q * m.se_rd};
  if (p0 > 0.0) m.rr = p1 / p0;
  if (t.n11 > 0 && t.n01 > 0) {
    m.se_log_rr = std::sqrt((1 - p1) / (t.n1() * p1) + (1 - p0) / (t.n0() * p0));
    m.ci_rr = {std::exp(std::log(m.rr) - q * m.se_log_rr), std::exp(std::log(m.rr) + q * m.se_log_rr)};
  } else {
    m.flags.push_back("rr standard error undefined: zero cell");
  }
  if (t.n10 > 0 && t.n01 > 0) m.or_ = (t.n11 * t.n00) / (t.n10 * t.n01);
  if (t.n11 > 0 && t.n10 > 0 && t.n01 > 0 && t.n00 > 0) {
    m.se_log_or = std::sqrt(1 / t.n11 + 1 / t.n10 + 1 / t.n01 + 1 / t.n00);
    m.ci_or = {std::exp(std::log(m.or_) - q * m.se_log_or), std::exp(std::log(m.or_) + q * m.se_log_or)};
  } else {
    m.flags.push_back("or standard error undefined: zero cell");
  }
  return m;
}

struct SimpsonReport {
  std::vector<RiskMeasures> strata;
  RiskMeasures pooled;
  TwoByTwo pooled_table;
  bool flip = false;  // every stratum rd has the opposite sign of the pooled rd
  std::vector<bool> stratum_flips;
};

inline SimpsonReport simpson_decompose(const std::vector<TwoByTwo>& strata, double alpha = 0.05) {
  if (strata.size() < 2) throw ValidationError("Simpson decomposition needs at least two strata");
  SimpsonReport r;
  for (const auto& t : strata) {
    r.strata.push_back(risk_measures(t, alpha));
    r.pooled_table = r.pooled_table + t;
  }
  r.pooled = risk_measures(r.pooled_table, alpha);
  const auto sgn = [](double v) { return (v > 0) - (v < 0); };
  bool all = true;
  for (const auto& s : r.strata) {
    const bool f = sgn(s.rd) != 0 && sgn(r.pooled.rd) != 0 && sgn(s.rd) != sgn(r.pooled.rd);
    r.stratum_flips.push_back(f);
    all = all && f;
  }
  r.flip = all;
  return r;
}

namespace detail {

inline double log_choose(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

// Exact binomial coefficient when it fits in 2^53; nullopt otherwise.
inline std::optional<unsigned __int128> exact_choose(long n, long k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (long i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned __int128>(i);
    if (r > (static_cast<unsigned __int128>(1) << 60)) return std::nullopt;
  }
  return r;
}

}  // namespace detail

// Hypergeometric law of n11 given the margins.
struct Hypergeom {
  long n1, c1, n;
  long lo() const { return std::max(0L, n1 + c1 - n); }
  long hi() const { return std::min(n1, c1); }
  double log_pmf(long k) const {
    return detail::log_choose(c1, k) + detail::log_choose(n - c1, n1 - k) - detail::log_choose(n, n1);
  }
  double pmf(long k) const { return (k < lo() || k > hi()) ? 0.0 : std::exp(log_pmf(k)); }
};

inline Hypergeom hypergeom_of(const TwoByTwo& t) {
  return {std::lround(t.n1()), std::lround(t.n11 + t.n01), std::lround(t.n())};
}

enum class Sided { upper, lower, two };

// One-sided = upper tail pr(n11 >= observed). Two-sided sums pmf values
// not exceeding pmf(observed)(1 + 1e-7).
inline double hypergeom_exact(const TwoByTwo& t, Sided sided = Sided::two) {
  check_table(t);
  for (double c : {t.n11, t.n10, t.n01, t.n00})
    if (c != std::floor(c)) throw ValidationError("exact test needs integer counts");
  const Hypergeom h = hypergeom_of(t);
  const long k0 = std::lround(t.n11);
  const auto denom = detail::exact_choose(h.n, h.n1);
  bool exact = denom.has_value();
  std::vector<unsigned __int128> num;
  if (exact) {
    for (long k = h.lo(); k <= h.hi() && exact; ++k) {
      auto a = detail::exact_choose(h.c1, k), b = detail::exact_choose(h.n - h.c1, h.n1 - k);
      if (!a || !b) exact = false;
      else num.push_back(*a * *b);
    }
  }
  if (exact) {
    unsigned __int128 acc = 0;
    const auto obs = num[k0 - h.lo()];
    for (long k = h.lo(); k <= h.hi(); ++k) {
      const auto v = num[k - h.lo()];
      bool take = false;
      switch (sided) {
        case Sided::upper: take = k >= k0; break;
        case Sided::lower: take = k <= k0; break;
        case Sided::two: take = static_cast<long double>(v) <= static_cast<long double>(obs) * (1.0L + 1e-7L); break;
      }
      if (take) acc += v;
    }
    return std::min(1.0, static_cast<double>(acc) / static_cast<double>(*denom));
  }
  const double lobs = h.log_pmf(k0);
  double acc = 0.0;
  for (long k = h.lo(); k <= h.hi(); ++k) {
    const double lp = h.log_pmf(k);
    bool take = false;
    switch (sided) {
      case Sided::upper: take = k >= k0; break;
      case Sided::lower: take = k <= k0; break;
      case Sided::two: take = lp <= lobs + std::log1p(1e-7); break;
    }
    if (take) acc += std::exp(lp);
  }
  return std::min(1.0, acc);
}

inline double evalue(double rr) {
  if (!(rr > 0.0) || !std::isfinite(rr)) throw ValidationError("E-value needs a positive risk ratio");
  if (rr < 1.0) rr = 1.0 / rr;
  return rr + std::sqrt(rr * (rr - 1.0));
}

// Bounding factor w1 w2 / (w1 + w2 - 1).
inline double cornfield_bounding_factor(double rr_zu, double rr_uy) {
  if (!(rr_zu > 1.0) || !(rr_uy > 1.0)) throw ValidationError("bounding factor arguments must exceed 1");
  return rr_zu * rr_uy / (rr_zu + rr_uy - 1.0);
}

// E-values for the point estimate and the confidence limit nearer to 1.
inline std::pair<double, double> evalue_report(double point_rr, double ci_bound_rr) {
  if (!(ci_bound_rr > 0.0)) throw ValidationError("E-value needs a positive risk ratio");
  const double e_point = evalue(point_rr);
  // A limit on the other side of 1 means the interval covers the null.
  const bool crosses = (point_rr >= 1.0) != (ci_bound_rr >= 1.0);
  const double e_ci = crosses ? 1.0 : evalue(ci_bound_rr);
  return {e_point, e_ci};
}

}  // namespace causalkit
