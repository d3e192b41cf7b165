#pragma once

#include "core.hpp"
#include "numerics.hpp"

#include <numeric>
#include <set>

namespace causalkit {

// ---------------------------------------------------------------- designs

enum class DesignKind { cre, bernoulli, sre, mpe, rem };

inline const char* design_name(DesignKind k) {
  switch (k) {
    case DesignKind::cre: return "cre";
    case DesignKind::bernoulli: return "bernoulli";
    case DesignKind::sre: return "sre";
    case DesignKind::mpe: return "mpe";
    case DesignKind::rem: return "rem";
  }
  return "?";
}

struct AssignmentDesign {
  DesignKind kind = DesignKind::cre;
  int n1 = 0, n0 = 0;     // cre, rem
  int n = 0;              // bernoulli, and unit count for all unit designs
  double p = 0.5;         // bernoulli
  IVec stratum_of;        // sre: stratum code 0..K-1 per unit
  std::vector<int> k_n1;  // sre: treated count per stratum
  std::vector<IVec> members;
  int pairs = 0;  // mpe
  double a = std::numeric_limits<double>::infinity();  // rem threshold
  Mat rem_x;     // rem covariates
  Mat rem_prec;  // inverse covariance of tau_hat_X under the CRE

  static AssignmentDesign cre(int n1, int n0) {
    if (n1 < 1 || n0 < 1) throw ValidationError("CRE needs n1 >= 1 and n0 >= 1");
    AssignmentDesign d;
    d.kind = DesignKind::cre;
    d.n1 = n1;
    d.n0 = n0;
    d.n = n1 + n0;
    return d;
  }

  static AssignmentDesign bernoulli(int n, double p) {
    if (n < 1) throw ValidationError("Bernoulli design needs n >= 1");
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("Bernoulli probability must lie in (0,1)");
    AssignmentDesign d;
    d.kind = DesignKind::bernoulli;
    d.n = n;
    d.p = p;
    return d;
  }

  // Strata codes per unit and the treated count per stratum.
  static AssignmentDesign sre(const IVec& stratum_of, const std::vector<int>& k_n1) {
    AssignmentDesign d;
    d.kind = DesignKind::sre;
    d.n = static_cast<int>(stratum_of.size());
    d.stratum_of = stratum_of;
    d.k_n1 = k_n1;
    d.members.assign(k_n1.size(), {});
    for (int i = 0; i < d.n; ++i) {
      const int k = stratum_of[i];
      if (k < 0 || k >= static_cast<int>(k_n1.size())) throw ValidationError("stratum code out of range");
      d.members[k].push_back(i);
    }
    for (std::size_t k = 0; k < k_n1.size(); ++k) {
      const int nk = static_cast<int>(d.members[k].size());
      if (k_n1[k] < 1 || k_n1[k] >= nk)
        throw ValidationError("stratum " + std::to_string(k) + " needs at least one treated and one control unit");
    }
    return d;
  }

  // Strata read off the observed assignment.
  static AssignmentDesign sre_from(const IVec& stratum_of, const Vec& z) {
    int K = 0;
    for (int s : stratum_of) K = std::max(K, s + 1);
    std::vector<int> k_n1(K, 0);
    for (std::size_t i = 0; i < stratum_of.size(); ++i) k_n1[stratum_of[i]] += z[i] == 1.0;
    return sre(stratum_of, k_n1);
  }

  static AssignmentDesign mpe(int pairs) {
    if (pairs < 1) throw ValidationError("MPE needs at least one pair");
    AssignmentDesign d;
    d.kind = DesignKind::mpe;
    d.pairs = pairs;
    d.n = pairs;
    return d;
  }

  static AssignmentDesign rem(int n1, int n0, const Mat& x, double a);
};

// Mahalanobis distance of the covariate mean difference.
inline double mahalanobis(const Vec& z, const Mat& x) {
  require_same_length(z.size(), x.rows(), "treatment vs covariates");
  require_binary(z, "treatment");
  const double n1 = z.sum(), n = static_cast<double>(z.size()), n0 = n - n1;
  if (n1 < 1 || n0 < 1) throw ValidationError("mahalanobis needs both arms nonempty");
  const Mat c = center_columns(x);
  Eigen::HouseholderQR<Mat> qr(c);
  const Eigen::Index p = x.cols();
  try {
    detail::check_rank(qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>());
  } catch (const SingularDesignError& e) {
    throw SingularDesignError("covariate covariance is singular: column " + std::to_string(e.column) +
                                  " is redundant and should be dropped",
                              e.column);
  }
  Eigen::RowVectorXd m1 = Eigen::RowVectorXd::Zero(p), m0 = Eigen::RowVectorXd::Zero(p);
  for (Eigen::Index i = 0; i < z.size(); ++i) (z[i] == 1.0 ? m1 : m0) += x.row(i);
  const Vec d = (m1 / n1 - m0 / n0).transpose();
  const Mat v = (n / (n1 * n0)) * sample_cov_matrix(x);
  return d.dot(v.ldlt().solve(d));
}

inline AssignmentDesign AssignmentDesign::rem(int n1, int n0, const Mat& x, double a) {
  if (!(a > 0.0)) throw ValidationError("ReM threshold a must be positive");
  AssignmentDesign d = cre(n1, n0);
  d.kind = DesignKind::rem;
  d.a = a;
  if (x.rows() != d.n) throw ValidationError("ReM covariate rows must equal n1 + n0");
  d.rem_x = x;
  Vec probe = Vec::Zero(d.n);
  probe.head(n1).setOnes();
  mahalanobis(probe, x);  // rank check
  const double n = d.n;
  const Mat v = (n / (static_cast<double>(n1) * n0)) * sample_cov_matrix(x);
  d.rem_prec = v.ldlt().solve(Mat::Identity(x.cols(), x.cols()));
  return d;
}

namespace detail {

inline double rem_distance(const AssignmentDesign& d, const Vec& z) {
  const Eigen::Index p = d.rem_x.cols();
  Eigen::RowVectorXd m1 = Eigen::RowVectorXd::Zero(p), m0 = Eigen::RowVectorXd::Zero(p);
  for (Eigen::Index i = 0; i < z.size(); ++i) (z[i] == 1.0 ? m1 : m0) += d.rem_x.row(i);
  const Vec diff = (m1 / d.n1 - m0 / d.n0).transpose();
  return diff.dot(d.rem_prec * diff);
}

// Binomial coefficient saturating at 2^62.
inline std::uint64_t choose_sat(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  constexpr std::uint64_t cap = std::uint64_t{1} << 62;
  unsigned __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (r > cap) return cap;
  }
  return static_cast<std::uint64_t>(r);
}

inline std::uint64_t mul_sat(std::uint64_t a, std::uint64_t b) {
  constexpr std::uint64_t cap = std::uint64_t{1} << 62;
  if (a == 0 || b == 0) return 0;
  if (a > cap / b) return cap;
  return std::min(cap, a * b);
}

// Lexicographic unranking of k-subsets of {0..n-1}; sets out[pos[j]] = 1 for chosen j.
inline void unrank_combination(std::uint64_t rank, int n, int k, const IVec* pos, Vec& out) {
  int next = 0;
  for (int left = k; left > 0; --left) {
    for (int j = next;; ++j) {
      const std::uint64_t c = choose_sat(n - j - 1, left - 1);
      if (rank < c) {
        out[pos ? (*pos)[j] : j] = 1.0;
        next = j + 1;
        break;
      }
      rank -= c;
    }
  }
}

}  // namespace detail

// Size of the design's support (saturating at 2^62).
inline std::uint64_t support_size(const AssignmentDesign& d) {
  switch (d.kind) {
    case DesignKind::cre:
    case DesignKind::rem: return detail::choose_sat(d.n, d.n1);
    case DesignKind::bernoulli:
    case DesignKind::mpe: return d.n >= 62 ? std::uint64_t{1} << 62 : std::uint64_t{1} << d.n;
    case DesignKind::sre: {
      std::uint64_t m = 1;
      for (std::size_t k = 0; k < d.k_n1.size(); ++k)
        m = detail::mul_sat(m, detail::choose_sat(static_cast<int>(d.members[k].size()), d.k_n1[k]));
      return m;
    }
  }
  return 0;
}

// Assignment number `rank` in a fixed enumeration order. For ReM this is the
// underlying CRE enumeration; acceptance is checked by the caller.
inline Vec assignment_at(const AssignmentDesign& d, std::uint64_t rank) {
  Vec z = Vec::Zero(d.n);
  switch (d.kind) {
    case DesignKind::cre:
    case DesignKind::rem: detail::unrank_combination(rank, d.n, d.n1, nullptr, z); break;
    case DesignKind::bernoulli:
    case DesignKind::mpe:
      // First unit is the most significant bit, as in the usual binary listing.
      for (int i = 0; i < d.n; ++i) z[i] = static_cast<double>((rank >> (d.n - 1 - i)) & 1u);
      break;
    case DesignKind::sre:
      for (std::size_t k = d.k_n1.size(); k-- > 0;) {
        const int nk = static_cast<int>(d.members[k].size());
        const std::uint64_t c = detail::choose_sat(nk, d.k_n1[k]);
        detail::unrank_combination(rank % c, nk, d.k_n1[k], &d.members[k], z);
        rank /= c;
      }
      break;
  }
  return z;
}

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 20;

// All assignments of the design's support (ReM: accepted ones only).
inline std::vector<Vec> enumerate_assignments(const AssignmentDesign& d,
                                              std::uint64_t cap = kDefaultEnumerationCap) {
  const std::uint64_t m = support_size(d);
  if (m > cap)
    throw ValidationError("support has " + std::to_string(m) + " assignments, above the enumeration cap of " +
                          std::to_string(cap) + "; use Monte Carlo mode");
  std::vector<Vec> out;
  out.reserve(m);
  for (std::uint64_t r = 0; r < m; ++r) {
    Vec z = assignment_at(d, r);
    if (d.kind == DesignKind::rem && std::isfinite(d.a) && detail::rem_distance(d, z) > d.a) continue;
    out.push_back(std::move(z));
  }
  return out;
}

inline Vec sample_assignment(const AssignmentDesign& d, Rng& rng) {
  Vec z = Vec::Zero(d.n);
  auto draw_subset = [&](int n, int k, const IVec* pos) {
    // Partial Fisher-Yates.
    IVec idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int j = 0; j < k; ++j) {
      const int pick = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - j)));
      std::swap(idx[j], idx[pick]);
      z[pos ? (*pos)[idx[j]] : idx[j]] = 1.0;
    }
  };
  switch (d.kind) {
    case DesignKind::cre: draw_subset(d.n, d.n1, nullptr); break;
    case DesignKind::bernoulli:
      for (int i = 0; i < d.n; ++i) z[i] = rng.bernoulli(d.p) ? 1.0 : 0.0;
      break;
    case DesignKind::mpe:
      for (int i = 0; i < d.n; ++i) z[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      break;
    case DesignKind::sre:
      for (std::size_t k = 0; k < d.k_n1.size(); ++k)
        draw_subset(static_cast<int>(d.members[k].size()), d.k_n1[k], &d.members[k]);
      break;
    case DesignKind::rem: {
      for (int tries = 0; tries < 1000000; ++tries) {
        z.setZero();
        draw_subset(d.n, d.n1, nullptr);
        if (!std::isfinite(d.a) || detail::rem_distance(d, z) <= d.a) return z;
      }
      throw NumericError("ReM: no acceptable assignment after 10^6 draws; threshold too small");
    }
  }
  return z;
}

// ------------------------------------------------------------- statistics

enum class StatId {
  diff_means,
  student_t,
  pooled_t,
  wilcoxon,
  ks,
  strat_diff,
  strat_t,
  van_elteren,
  aligned_rank,
  strat_ks,
  pair_mean,
  pair_t,
  sign_rank,
  sign,
  mcnemar,
  butler_ks,
  lin_t,
  regression_coef,
  pseudo_outcome
};

enum class StratKs { sum, max, pooled };

struct StatSpec {
  StatId id = StatId::diff_means;
  int van_elteren_variant = 1;  // 1: c = 1/(n1 n0); 2: c = 1/(n+1)
  StratKs strat_ks = StratKs::sum;
  StatId base = StatId::diff_means;  // for pseudo_outcome
};

inline const std::vector<std::pair<std::string, StatId>>& stat_names() {
  static const std::vector<std::pair<std::string, StatId>> v = {
      {"diff_means", StatId::diff_means}, {"student_t", StatId::student_t},
      {"pooled_t", StatId::pooled_t},     {"wilcoxon", StatId::wilcoxon},
      {"ks", StatId::ks},                 {"strat_diff", StatId::strat_diff},
      {"strat_t", StatId::strat_t},       {"van_elteren", StatId::van_elteren},
      {"aligned_rank", StatId::aligned_rank}, {"strat_ks", StatId::strat_ks},
      {"pair_mean", StatId::pair_mean},   {"pair_t", StatId::pair_t},
      {"sign_rank", StatId::sign_rank},   {"sign", StatId::sign},
      {"mcnemar", StatId::mcnemar},       {"butler_ks", StatId::butler_ks},
      {"lin_t", StatId::lin_t},           {"regression_coef", StatId::regression_coef},
      {"pseudo_outcome", StatId::pseudo_outcome}};
  return v;
}

inline std::string stat_name(StatId id) {
  for (const auto& [n, s] : stat_names())
    if (s == id) return n;
  return "?";
}

inline StatId parse_stat(const std::string& s) {
  for (const auto& [n, id] : stat_names())
    if (n == s) return id;
  throw ValidationError("unknown statistic: " + s);
}

inline bool is_pair_stat(StatId id) {
  return id == StatId::pair_mean || id == StatId::pair_t || id == StatId::sign_rank || id == StatId::sign ||
         id == StatId::mcnemar || id == StatId::butler_ks;
}

inline bool is_strata_stat(StatId id) {
  return id == StatId::strat_diff || id == StatId::strat_t || id == StatId::van_elteren ||
         id == StatId::aligned_rank || id == StatId::strat_ks;
}

// Data the statistics see. Quantities fixed under the sharp null are cached.
struct FrtData {
  // unit level
  Vec y;
  Mat x;
  IVec strata;  // codes 0..K-1, empty if none
  // pair level: within-pair differences (treated minus control) and covariate differences
  bool paired = false;
  Vec diff;
  Mat xdiff;

  // caches
  Vec ranks;          // pooled midranks of y
  Vec aligned_ranks;  // midranks of y minus stratum mean
  Vec stratum_ranks;  // midranks within stratum
  std::vector<IVec> members;
  Vec abs_diff_ranks;
  Vec pseudo_resid;

  static FrtData units(const Vec& y, const Mat& x = Mat(), const IVec& strata = {}) {
    FrtData d;
    d.y = y;
    d.x = x.rows() == y.size() ? x : Mat(y.size(), 0);
    d.strata = strata;
    if (!strata.empty()) {
      require_same_length(static_cast<Eigen::Index>(strata.size()), y.size(), "strata vs outcome");
      int K = 0;
      for (int s : strata) {
        if (s < 0) throw ValidationError("stratum codes must be nonnegative");
        K = std::max(K, s + 1);
      }
      d.members.assign(K, {});
      for (std::size_t i = 0; i < strata.size(); ++i) d.members[strata[i]].push_back(static_cast<int>(i));
      Vec centered = y;
      d.stratum_ranks.resize(y.size());
      for (const auto& m : d.members) {
        if (m.empty()) continue;
        const Vec ys = subset(y, m);
        const double mu = ys.mean();
        const Vec r = midranks(ys);
        for (std::size_t j = 0; j < m.size(); ++j) {
          centered[m[j]] = y[m[j]] - mu;
          d.stratum_ranks[m[j]] = r[j];
        }
      }
      d.aligned_ranks = midranks(centered);
    }
    d.ranks = midranks(y);
    if (d.x.cols() > 0) d.pseudo_resid = ols(with_intercept(d.x), y).residuals;
    else d.pseudo_resid = y.array() - y.mean();
    return d;
  }

  // Zero differences are dropped: they carry no randomization information.
  static FrtData pairs(const Vec& diff, const Mat& xdiff = Mat()) {
    FrtData d;
    d.paired = true;
    IVec keep;
    for (Eigen::Index i = 0; i < diff.size(); ++i)
      if (diff[i] != 0.0) keep.push_back(static_cast<int>(i));
    d.diff = subset(diff, keep);
    d.xdiff = xdiff.rows() == diff.size() ? subset_rows(xdiff, keep) : Mat(static_cast<Eigen::Index>(keep.size()), 0);
    d.abs_diff_ranks = midranks(d.diff.cwiseAbs());
    return d;
  }

  // Builds pair differences from unit rows grouped by pair id (exactly one treated per pair).
  static FrtData pairs_from_units(const IVec& pair_id, const Vec& z, const Vec& y, const Mat& x = Mat()) {
    std::map<int, std::pair<int, int>> idx;  // pair -> (treated row, control row)
    for (std::size_t i = 0; i < pair_id.size(); ++i) {
      auto& e = idx.try_emplace(pair_id[i], -1, -1).first->second;
      int& slot = z[i] == 1.0 ? e.first : e.second;
      if (slot >= 0) throw ValidationError("pair " + std::to_string(pair_id[i]) + " needs one treated and one control unit");
      slot = static_cast<int>(i);
    }
    Vec diff(idx.size());
    Mat xd(idx.size(), x.rows() == y.size() ? x.cols() : 0);
    Eigen::Index k = 0;
    for (const auto& [pid, tc] : idx) {
      if (tc.first < 0 || tc.second < 0)
        throw ValidationError("pair " + std::to_string(pid) + " needs one treated and one control unit");
      diff[k] = y[tc.first] - y[tc.second];
      if (xd.cols() > 0) xd.row(k) = x.row(tc.first) - x.row(tc.second);
      ++k;
    }
    return pairs(diff, xd);
  }

  Eigen::Index size() const { return paired ? diff.size() : y.size(); }
};

namespace detail {

struct ArmSummary {
  double n1 = 0, n0 = 0, m1 = 0, m0 = 0, v1 = 0, v0 = 0;
};

inline ArmSummary arms(const Vec& z, const Vec& y, const IVec* idx = nullptr) {
  ArmSummary a;
  double s1 = 0, s0 = 0, q1 = 0, q0 = 0;
  const Eigen::Index n = idx ? static_cast<Eigen::Index>(idx->size()) : y.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = idx ? (*idx)[j] : j;
    if (z[i] == 1.0) {
      a.n1 += 1;
      s1 += y[i];
    } else {
      a.n0 += 1;
      s0 += y[i];
    }
  }
  a.m1 = a.n1 > 0 ? s1 / a.n1 : std::numeric_limits<double>::quiet_NaN();
  a.m0 = a.n0 > 0 ? s0 / a.n0 : std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = idx ? (*idx)[j] : j;
    if (z[i] == 1.0) q1 += (y[i] - a.m1) * (y[i] - a.m1);
    else q0 += (y[i] - a.m0) * (y[i] - a.m0);
  }
  a.v1 = a.n1 > 1 ? q1 / (a.n1 - 1) : std::numeric_limits<double>::quiet_NaN();
  a.v0 = a.n0 > 1 ? q0 / (a.n0 - 1) : std::numeric_limits<double>::quiet_NaN();
  return a;
}

// Ratio that refuses a degenerate denominator (strict) or maps it to +/-inf.
inline double studentize(double num, double var, bool strict) {
  if (var > 0.0 && std::isfinite(var)) return num / std::sqrt(var);
  if (strict) throw NumericError("degenerate variance in studentized statistic");
  if (num > 0) return std::numeric_limits<double>::infinity();
  if (num < 0) return -std::numeric_limits<double>::infinity();
  return 0.0;
}

inline double ks_two_sample(const Vec& z, const Vec& y, const IVec* idx = nullptr) {
  std::vector<std::pair<double, int>> v;
  const Eigen::Index n = idx ? static_cast<Eigen::Index>(idx->size()) : y.size();
  double n1 = 0, n0 = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = idx ? (*idx)[j] : j;
    v.emplace_back(y[i], z[i] == 1.0 ? 1 : 0);
    (z[i] == 1.0 ? n1 : n0) += 1;
  }
  if (n1 == 0 || n0 == 0) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  double c1 = 0, c0 = 0, d = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    (v[k].second ? c1 : c0) += 1;
    if (k + 1 == v.size() || v[k + 1].first != v[k].first) d = std::max(d, std::abs(c1 / n1 - c0 / n0));
  }
  return d;
}

}  // namespace detail

// Statistic for unit-level assignment z (or sign pattern z for paired data,
// z_i = 1 keeping the observed sign). strict=false maps degenerate studentized
// values to +/-inf, used for replicates.
inline double compute_statistic(const StatSpec& s, const Vec& z, const FrtData& d, bool strict = true) {
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  if (is_pair_stat(s.id) != d.paired)
    throw ValidationError("statistic " + stat_name(s.id) + (d.paired ? " needs unit-level data" : " needs matched pairs"));
  if (is_strata_stat(s.id) && d.strata.empty()) throw ValidationError("statistic " + stat_name(s.id) + " needs strata");
  require_same_length(z.size(), d.size(), "assignment vs data");

  if (d.paired) {
    const Eigen::Index n = d.diff.size();
    if (n == 0) throw ValidationError("all pair differences are zero");
    Vec t(n);
    for (Eigen::Index i = 0; i < n; ++i) t[i] = (z[i] == 1.0 ? 1.0 : -1.0) * d.diff[i];
    switch (s.id) {
      case StatId::pair_mean: return t.mean();
      case StatId::pair_t: {
        if (d.xdiff.cols() == 0) {
          if (n < 2) throw ValidationError("pair_t needs at least two pairs");
          return detail::studentize(t.mean(), sample_var(t) / static_cast<double>(n), strict);
        }
        Mat xd = d.xdiff;
        for (Eigen::Index i = 0; i < n; ++i)
          if (z[i] != 1.0) xd.row(i) *= -1.0;
        const LinearFit f = ols(with_intercept(xd), t);
        return detail::studentize(f.coefficients[0], f.model_cov(0, 0), strict);
      }
      case StatId::sign_rank: {
        double w = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (t[i] > 0) w += d.abs_diff_ranks[i];
        return w;
      }
      case StatId::sign: return static_cast<double>((t.array() > 0).count());
      case StatId::mcnemar: {
        double m10 = 0, m01 = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (t[i] != 1.0 && t[i] != -1.0) throw ValidationError("mcnemar needs binary outcomes (differences in {-1,0,1})");
          (t[i] > 0 ? m10 : m01) += 1;
        }
        return (m10 - m01) / std::sqrt(m10 + m01);
      }
      case StatId::butler_ks: {
        std::vector<double> srt(t.data(), t.data() + n);
        std::sort(srt.begin(), srt.end());
        const double nn = static_cast<double>(n);
        double best = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          for (double u : {t[i], -t[i]}) {
            const double f = static_cast<double>(std::upper_bound(srt.begin(), srt.end(), u) - srt.begin()) / nn;
            const double fl = static_cast<double>(std::lower_bound(srt.begin(), srt.end(), -u) - srt.begin()) / nn;
            best = std::max(best, std::abs(f + fl - 1.0));
          }
        return best;
      }
      default: break;
    }
    return nan;
  }

  const Vec& y = d.y;
  switch (s.id) {
    case StatId::diff_means: {
      const auto a = detail::arms(z, y);
      return a.m1 - a.m0;
    }
    case StatId::student_t: {
      const auto a = detail::arms(z, y);
      return detail::studentize(a.m1 - a.m0, a.v1 / a.n1 + a.v0 / a.n0, strict);
    }
    case StatId::pooled_t: {
      const auto a = detail::arms(z, y);
      const double sp = ((a.n1 - 1) * a.v1 + (a.n0 - 1) * a.v0) / (a.n1 + a.n0 - 2);
      return detail::studentize(a.m1 - a.m0, sp * (1 / a.n1 + 1 / a.n0), strict);
    }
    case StatId::wilcoxon: return z.dot(d.ranks);
    case StatId::ks: return detail::ks_two_sample(z, y);
    case StatId::aligned_rank: return z.dot(d.aligned_ranks);
    case StatId::strat_diff:
    case StatId::strat_t: {
      const double n = static_cast<double>(y.size());
      double tau = 0, v = 0;
      for (const auto& m : d.members) {
        if (m.empty()) continue;
        const auto a = detail::arms(z, y, &m);
        const double pk = static_cast<double>(m.size()) / n;
        tau += pk * (a.m1 - a.m0);
        v += pk * pk * (a.v1 / a.n1 + a.v0 / a.n0);
      }
      return s.id == StatId::strat_diff ? tau : detail::studentize(tau, v, strict);
    }
    case StatId::van_elteren: {
      double w = 0;
      for (const auto& m : d.members) {
        if (m.empty()) continue;
        double wk = 0, n1 = 0;
        for (int i : m)
          if (z[i] == 1.0) {
            wk += d.stratum_ranks[i];
            n1 += 1;
          }
        const double nk = static_cast<double>(m.size()), n0 = nk - n1;
        w += (s.van_elteren_variant == 2 ? 1.0 / (nk + 1.0) : 1.0 / (n1 * n0)) * wk;
      }
      return w;
    }
    case StatId::strat_ks: {
      if (s.strat_ks == StratKs::pooled) {
        // max_y | sum_k pi_k (F_k1(y) - F_k0(y)) |
        const double n = static_cast<double>(y.size());
        std::vector<double> grid(y.data(), y.data() + y.size());
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        Vec acc = Vec::Zero(static_cast<Eigen::Index>(grid.size()));
        for (const auto& m : d.members) {
          if (m.empty()) continue;
          double n1 = 0, n0 = 0;
          for (int i : m) (z[i] == 1.0 ? n1 : n0) += 1;
          const double pk = static_cast<double>(m.size()) / n;
          for (int i : m) {
            const auto g = std::lower_bound(grid.begin(), grid.end(), y[i]) - grid.begin();
            const double inc = z[i] == 1.0 ? pk / n1 : -pk / n0;
            acc.segment(g, acc.size() - g).array() += inc;
          }
        }
        return acc.cwiseAbs().maxCoeff();
      }
      double out = 0;
      for (const auto& m : d.members) {
        if (m.empty()) continue;
        double n1 = 0;
        for (int i : m) n1 += z[i] == 1.0;
        const double nk = static_cast<double>(m.size()), n0 = nk - n1;
        const double v = std::sqrt(n1 * n0 / nk) * detail::ks_two_sample(z, y, &m);
        out = s.strat_ks == StratKs::max ? std::max(out, v) : out + v;
      }
      return out;
    }
    case StatId::lin_t: {
      const Eigen::Index n = y.size();
      if (d.x.cols() == 0) {
        const auto a = detail::arms(z, y);
        return detail::studentize(a.m1 - a.m0, a.v1 / a.n1 + a.v0 / a.n0, strict);
      }
      const Mat xc = center_columns(d.x);
      Mat design(n, 2 + 2 * xc.cols());
      design.col(0).setOnes();
      design.col(1) = z;
      design.middleCols(2, xc.cols()) = xc;
      design.rightCols(xc.cols()) = xc.array().colwise() * z.array();
      const LinearFit f = ols(design, y);
      return detail::studentize(f.coefficients[1], robust_cov(f, HC::HC2)(1, 1), strict);
    }
    case StatId::regression_coef: {
      const Mat design = hcat({Mat::Ones(y.size(), 1), Mat(z), d.x});
      return ols(design, y).coefficients[1];
    }
    case StatId::pseudo_outcome: {
      if (s.base == StatId::pseudo_outcome || is_pair_stat(s.base)) throw ValidationError("invalid pseudo-outcome base statistic");
      FrtData r = FrtData::units(d.pseudo_resid, Mat(), d.strata);
      StatSpec b = s;
      b.id = s.base;
      return compute_statistic(b, z, r, strict);
    }
    default: break;
  }
  return nan;
}

// Null mean when known in closed form (used to center two-sided tests).
inline std::optional<double> null_center(const StatSpec& s, const Vec& z_obs, const FrtData& d) {
  switch (s.id) {
    case StatId::diff_means:
    case StatId::strat_diff:
    case StatId::pair_mean:
    case StatId::student_t:
    case StatId::pooled_t:
    case StatId::strat_t:
    case StatId::pair_t:
    case StatId::mcnemar:
    case StatId::lin_t: return 0.0;
    case StatId::wilcoxon:
    case StatId::aligned_rank: {
      const double n = static_cast<double>(z_obs.size()), n1 = z_obs.sum();
      return n1 * (n + 1) / 2;
    }
    case StatId::sign_rank: return d.abs_diff_ranks.sum() / 2;
    case StatId::sign: return static_cast<double>(d.diff.size()) / 2;
    case StatId::van_elteren: {
      double c = 0;
      for (const auto& m : d.members) {
        if (m.empty()) continue;
        double n1 = 0;
        for (int i : m) n1 += z_obs[i] == 1.0;
        const double nk = static_cast<double>(m.size()), n0 = nk - n1;
        c += (s.van_elteren_variant == 2 ? 1.0 / (nk + 1.0) : 1.0 / (n1 * n0)) * n1 * (nk + 1) / 2;
      }
      return c;
    }
    default: return std::nullopt;
  }
}

enum class FrtMode { automatic, exact, monte_carlo };

struct FrtOptions {
  FrtMode mode = FrtMode::automatic;
  int reps = 10000;
  std::optional<std::uint64_t> seed;
  bool two_sided = false;
  std::uint64_t cap = kDefaultEnumerationCap;
  bool keep_replicates = false;
};

struct RandInferenceResult {
  std::string statistic;
  double observed = 0;
  bool exact = false;
  std::uint64_t count = 0;  // M in exact mode, R in Monte Carlo mode
  double p_hat = 0;
  double p_valid = 0;
  std::optional<double> mc_se;
  bool two_sided = false;
  std::vector<double> replicates;
};

// Fisher randomization test of the sharp null. z_obs is the observed
// assignment (all ones for paired data, meaning "observed signs").
inline RandInferenceResult frt(const FrtData& d, const Vec& z_obs, const AssignmentDesign& design, const StatSpec& s,
                               const FrtOptions& o = {}) {
  if (d.paired != (design.kind == DesignKind::mpe))
    throw ValidationError("matched-pairs data require the mpe design and vice versa");
  require_same_length(z_obs.size(), d.size(), "assignment vs data");
  if (design.n != d.size()) throw ValidationError("design size does not match the data");
  const double t_obs = compute_statistic(s, z_obs, d, true);
  if (!std::isfinite(t_obs)) throw NumericError("observed statistic is undefined");
  const double center = o.two_sided ? null_center(s, z_obs, d).value_or(0.0) : 0.0;
  auto extremeness = [&](double t) { return o.two_sided ? std::abs(t - center) : t; };
  const double e_obs = extremeness(t_obs);
  const double tol = 1e-10 * (1.0 + std::abs(e_obs));
  auto value = [&](const Vec& z) {
    const double t = compute_statistic(s, z, d, false);
    return std::isnan(t) ? -std::numeric_limits<double>::infinity() : t;
  };

  RandInferenceResult r;
  r.statistic = stat_name(s.id);
  r.observed = t_obs;
  r.two_sided = o.two_sided;
  const std::uint64_t m = support_size(design);
  bool exact = o.mode == FrtMode::exact || (o.mode == FrtMode::automatic && m <= o.cap);
  if (o.mode == FrtMode::exact && m > o.cap)
    throw ValidationError("exact enumeration needs " + std::to_string(m) + " assignments, above the cap " +
                          std::to_string(o.cap) + "; use Monte Carlo mode");

  if (exact) {
    std::vector<double> vals(m, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> wts(m, 1.0);
    std::vector<char> keep(m, 1);
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t k) {
      const Vec z = assignment_at(design, k);
      if (design.kind == DesignKind::rem && std::isfinite(design.a) && detail::rem_distance(design, z) > design.a) {
        keep[k] = 0;
        return;
      }
      if (design.kind == DesignKind::bernoulli) {
        const double n1 = z.sum();
        wts[k] = std::pow(design.p, n1) * std::pow(1 - design.p, design.n - n1);
      }
      vals[k] = value(z);
    });
    double num = 0, den = 0;
    std::uint64_t kept = 0;
    for (std::uint64_t k = 0; k < m; ++k) {
      if (!keep[k]) continue;
      ++kept;
      den += wts[k];
      if (extremeness(vals[k]) >= e_obs - tol) num += wts[k];
      if (o.keep_replicates) r.replicates.push_back(vals[k]);
    }
    r.exact = true;
    r.count = kept;
    r.p_hat = num / den;
    r.p_valid = r.p_hat;
    return r;
  }

  if (!o.seed) throw ValidationError("Monte Carlo randomization test requires a seed");
  if (o.reps < 1) throw ValidationError("Monte Carlo randomization test requires reps >= 1");
  std::vector<double> vals(o.reps);
  parallel_for(static_cast<std::size_t>(o.reps), [&](std::size_t k) {
    Rng rng(*o.seed, k);
    vals[k] = value(sample_assignment(design, rng));
  });
  double hits = 0;
  for (double v : vals) hits += extremeness(v) >= e_obs - tol;
  r.exact = false;
  r.count = static_cast<std::uint64_t>(o.reps);
  r.p_hat = hits / o.reps;
  r.p_valid = (1 + hits) / (1.0 + o.reps);
  r.mc_se = std::sqrt(r.p_hat * (1 - r.p_hat) / o.reps);
  if (o.keep_replicates) r.replicates = vals;
  return r;
}

// Upper tail of the limiting Kolmogorov law for sqrt(n1 n0 / n) * D.
inline double ks_asymptotic_pvalue(double d, double n1, double n0) {
  if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("KS statistic must lie in [0,1]");
  if (n1 < 1 || n0 < 1) throw ValidationError("KS sample sizes must be >= 1");
  const double x = std::sqrt(n1 * n0 / (n1 + n0)) * d;
  if (x <= 0.0) return 1.0;
  const double pi = 3.14159265358979323846;
  if (x < 1.0) {
    double s = 0;
    for (int j = 1; j <= 200; ++j) {
      const double term = std::exp(-(2.0 * j - 1) * (2.0 * j - 1) * pi * pi / (8 * x * x));
      s += term;
      if (j >= 3 && term < 1e-16 * s) break;
    }
    return std::clamp(1.0 - std::sqrt(2 * pi) / x * s, 0.0, 1.0);
  }
  double s = 0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * x * x);
    s += (j % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

}  // namespace causalkit
