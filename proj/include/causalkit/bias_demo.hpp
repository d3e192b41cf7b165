#pragma once

#include "core.hpp"
#include "numerics.hpp"

namespace causalkit {

enum class BiasKind { m_bias, z_bias };

inline BiasKind parse_bias_kind(const std::string& s) {
  if (s == "m_bias" || s == "m-bias") return BiasKind::m_bias;
  if (s == "z_bias" || s == "z-bias") return BiasKind::z_bias;
  throw ValidationError("unknown bias demo: " + s);
}

// M-bias: X = aU1 + bU2 + e, Z = cU1 + e, Y = dU2 + e.
// Z-bias: Z = aX + bU + e, Y = tau Z + cU + e. All inputs standard normal.
struct BiasParams {
  double a = 1, b = 1, c = 1, d = 1, tau = 0;
};

struct CoefEstimate {
  double estimate = 0;
  double se = 0;  // EHW; the Monte Carlo standard error of the coefficient
  double target = 0;
};

struct BiasDemoReport {
  BiasKind kind = BiasKind::z_bias;
  BiasParams params;
  long n = 0;
  std::uint64_t seed = 0;
  CoefEstimate unadjusted, adjusted;
};

inline std::pair<double, double> bias_targets(BiasKind kind, const BiasParams& p) {
  if (kind == BiasKind::m_bias) {
    const double den = (p.c * p.c + 1) * (p.a * p.a + p.b * p.b + 1) - p.a * p.a * p.c * p.c;
    return {0.0, -p.a * p.b * p.c * p.d / den};
  }
  return {p.tau + p.b * p.c / (p.a * p.a + p.b * p.b + 1), p.tau + p.b * p.c / (p.b * p.b + 1)};
}

inline BiasDemoReport bias_demo(BiasKind kind, const BiasParams& p, long n, std::uint64_t seed) {
  if (n < 10000) throw ValidationError("bias demo needs n >= 10000");
  Rng rng(seed, 0);
  Vec z(n), x(n), y(n);
  for (long i = 0; i < n; ++i) {
    if (kind == BiasKind::m_bias) {
      const double u1 = rng.normal(), u2 = rng.normal();
      x[i] = p.a * u1 + p.b * u2 + rng.normal();
      z[i] = p.c * u1 + rng.normal();
      y[i] = p.d * u2 + rng.normal();
    } else {
      x[i] = rng.normal();
      const double u = rng.normal();
      z[i] = p.a * x[i] + p.b * u + rng.normal();
      y[i] = p.tau * z[i] + p.c * u + rng.normal();
    }
  }
  const Mat one = Mat::Ones(n, 1);
  const LinearFit fu = ols(hcat({one, Mat(z)}), y);
  const LinearFit fa = ols(hcat({one, Mat(z), Mat(x)}), y);
  const auto [tu, ta] = bias_targets(kind, p);
  BiasDemoReport r;
  r.kind = kind;
  r.params = p;
  r.n = n;
  r.seed = seed;
  r.unadjusted = {fu.coefficients[1], robust_se(fu, HC::HC0, 1), tu};
  r.adjusted = {fa.coefficients[1], robust_se(fa, HC::HC0, 1), ta};
  return r;
}

}  // namespace causalkit
