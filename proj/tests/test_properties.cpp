// Seeded simulation checks of finite-sample properties.
#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace causalkit;
using testutil::Gen;

namespace {

struct Moments {
  double mean, mc_se;
};

Moments moments(const std::vector<double>& v) {
  const Vec m = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  return {m.mean(), std::sqrt(sample_var(m) / static_cast<double>(v.size()))};
}

SimTruth science(std::uint64_t seed, int n, double effect_sd) {
  Gen g(seed);
  SimTruth t;
  t.y0 = g.normals(n);
  t.y1 = (t.y0.array() + 1.0 + effect_sd * g.normals(n).array()).matrix();
  return t;
}

}  // namespace

TEST(NeymanProperty, ExactUnderConstantEffects) {
  const int n = 40, n1 = 20, draws = 10000;
  const SimTruth t = science(1, n, 0.0);
  Gen g(2);
  std::vector<double> est, vhat;
  for (int r = 0; r < draws; ++r) {
    const Vec z = g.cre(n, n1);
    const auto rep = neyman_cre(z, t.observed(z));
    est.push_back(rep.estimate);
    vhat.push_back(rep.se * rep.se);
  }
  const double v = t.var_diff_means(n1, n - n1);
  const double ratio = moments(vhat).mean / v;
  EXPECT_GE(ratio, 0.95);
  EXPECT_LE(ratio, 1.05);
  const Vec e = Eigen::Map<const Vec>(est.data(), draws);
  EXPECT_NEAR(e.mean(), t.tau(), 3 * std::sqrt(v / draws));
  EXPECT_NEAR(sample_var(e) / v, 1.0, 0.05);
}

TEST(NeymanProperty, ConservativeUnderHeterogeneity) {
  const int n = 40, n1 = 20, draws = 10000;
  const SimTruth t = science(3, n, 1.5);
  Gen g(4);
  std::vector<double> vhat;
  for (int r = 0; r < draws; ++r) {
    const Vec z = g.cre(n, n1);
    const double se = neyman_cre(z, t.observed(z)).se;
    vhat.push_back(se * se);
  }
  const Moments m = moments(vhat);
  const double v = t.var_diff_means(n1, n - n1);
  // E(Vhat) - Var = S_tau^2 / n
  EXPECT_GT(m.mean, v);
  EXPECT_NEAR(m.mean - v, t.s2_tau() / n, 3 * m.mc_se);
}

TEST(NeymanProperty, PositiveCorrelationInflatesVariance) {
  Gen g(5);
  const int n = 30;
  Vec a = g.normals(n), b = g.normals(n);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  SimTruth pos{a, b}, neg{a, b.reverse()};
  EXPECT_GT(pos.var_diff_means(15, 15), neg.var_diff_means(15, 15));
  // and empirically
  std::vector<double> ep, en;
  for (int r = 0; r < 5000; ++r) {
    const Vec z = g.cre(n, 15);
    ep.push_back(neyman_cre(z, pos.observed(z)).estimate);
    en.push_back(neyman_cre(z, neg.observed(z)).estimate);
  }
  const Vec vp = Eigen::Map<Vec>(ep.data(), 5000), vn = Eigen::Map<Vec>(en.data(), 5000);
  EXPECT_GT(sample_var(vp), sample_var(vn));
}

TEST(FrtProperty, ValidUnderSharpNull) {
  const int sims = 1000, n = 30;
  Gen g(6);
  int reject = 0;
  StatSpec s;
  s.id = StatId::diff_means;
  for (int r = 0; r < sims; ++r) {
    const Vec y = g.normals(n), z = g.cre(n, 12);
    FrtOptions o;
    o.mode = FrtMode::monte_carlo;
    o.reps = 199;
    o.seed = 1000 + r;
    reject += frt(FrtData::units(y, Mat(n, 0), {}), z, AssignmentDesign::cre(12, 18), s, o).p_valid <= 0.05;
  }
  EXPECT_LE(reject / static_cast<double>(sims), 0.06);
}

TEST(SamplingProperty, SimpleRandomSampleMoments) {
  Gen g(7);
  const int N = 50, n = 15, draws = 20000;
  const Vec pop = (g.normals(N).array() * 2 + 3).matrix();
  const double mu = pop.mean(), S2 = sample_var(pop);
  std::vector<double> means, sq, s2;
  for (int r = 0; r < draws; ++r) {
    const Vec pick = subset(pop, where(g.cre(N, n), 1.0));
    means.push_back(pick.mean());
    sq.push_back(std::pow(pick.mean() - mu, 2));
    s2.push_back(sample_var(pick));
  }
  const Moments m = moments(means), v = moments(sq), s = moments(s2);
  EXPECT_NEAR(m.mean, mu, 3 * m.mc_se);
  EXPECT_NEAR(v.mean, (1.0 - static_cast<double>(n) / N) * S2 / n, 3 * v.mc_se);
  EXPECT_NEAR(s.mean, S2, 3 * s.mc_se);  // sample variance is unbiased for S^2
}

TEST(BootstrapProperty, SeOfMeanNearAnalytic) {
  Gen g(8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Vec y = (g.normals(100).array() + 1.0).matrix();
    const auto b = bootstrap(100, 200, seed, [&](const IVec& idx) -> std::optional<double> { return subset(y, idx).mean(); });
    const double analytic = std::sqrt(sample_var(y) / 100);
    EXPECT_NEAR(b.se / analytic, 1.0, 0.15) << seed;
  }
}

TEST(WeightingProperty, InverseScoreWeightsAverageToOne) {
  Gen g(9);
  const int n = 500, reps = 2000;
  const Mat x = g.normals(n, 1);
  Vec e(n);
  for (int i = 0; i < n; ++i) e[i] = 1 / (1 + std::exp(-x(i, 0)));
  std::vector<double> one_t, one_c;
  for (int r = 0; r < reps; ++r) {
    const Vec z = g.bernoulli(e);
    one_t.push_back((z.array() / e.array()).mean());
    one_c.push_back(((1 - z.array()) / (1 - e.array())).mean());
  }
  const Moments t = moments(one_t), c = moments(one_c);
  EXPECT_NEAR(t.mean, 1.0, 3 * t.mc_se);
  EXPECT_NEAR(c.mean, 1.0, 3 * c.mc_se);
}

namespace {

// Outcome and score models from the doubly robust simulation study, each either
// linear-logistic in x or nonlinear through exp(x).
struct DrCase {
  bool ps_ok, outcome_ok;
};

Vec dr_bias(const DrCase& c, int n, int reps, std::uint64_t seed) {
  Gen g(seed);
  Vec bias = Vec::Zero(4);
  const double tau = c.outcome_ok ? 0.0 : 0.4 * std::exp(0.5) - 0.2 * std::exp(0.5);
  for (int r = 0; r < reps; ++r) {
    const Mat x = g.normals(n, 2);
    Vec z(n), y(n);
    for (int i = 0; i < n; ++i) {
      const double e1 = std::exp(x(i, 0)), e2 = std::exp(x(i, 1));
      const double lp = c.ps_ok ? x(i, 0) + x(i, 1) : -1 + e1 - e2;
      z[i] = g.unif() < 1 / (1 + std::exp(-lp));
      const double m1 = c.outcome_ok ? 1 + 2 * x(i, 0) + x(i, 1) : 1 + 0.2 * e1 - 0.1 * e2;
      const double m0 = c.outcome_ok ? 1 + 2 * x(i, 0) + x(i, 1) : 1 - 0.2 * e1 + 0.1 * e2;
      y[i] = (z[i] == 1 ? m1 : m0) + g.normal();
    }
    bias += ate_point(z, y, x).array().matrix() - Vec::Constant(4, tau);
  }
  return bias / reps;
}

}  // namespace

TEST(DoublyRobustProperty, FourCaseBiasPattern) {
  // order: reg, ht, hajek, dr
  const Vec b11 = dr_bias({true, true}, 500, 500, 11);
  for (int k = 0; k < 4; ++k) EXPECT_LT(std::abs(b11[k]), 0.06) << "both correct " << k;

  const Vec b01 = dr_bias({false, true}, 500, 500, 12);
  EXPECT_LT(std::abs(b01[0]), 0.03);
  EXPECT_LT(std::abs(b01[3]), 0.05);
  EXPECT_LT(b01[1], -0.3);
  EXPECT_LT(b01[2], -0.3);

  const Vec b10 = dr_bias({true, false}, 500, 500, 13);
  EXPECT_LT(b10[0], -0.02);
  for (int k = 1; k < 4; ++k) EXPECT_LT(std::abs(b10[k]), 0.02) << "score correct " << k;
  EXPECT_GT(std::abs(b10[0]), std::abs(b10[3]));

  const Vec b00 = dr_bias({false, false}, 500, 500, 14);
  EXPECT_LT(b00[0], 0.0);
  EXPECT_GT(b00[1], 0.0);
  EXPECT_LT(b00[2], 0.0);
  EXPECT_GT(b00[3], 0.0);
}

TEST(BiasDemoProperty, ZBiasAtOneMillion) {
  const BiasDemoReport r = bias_demo(BiasKind::z_bias, {1, 1, 1, 0, 0}, 1000000, 20);
  EXPECT_NEAR(r.unadjusted.estimate, 1.0 / 3, 3 * r.unadjusted.se);
  EXPECT_NEAR(r.adjusted.estimate, 0.5, 3 * r.adjusted.se);
  const BiasDemoReport s = bias_demo(BiasKind::z_bias, {10, 1, 1, 0, 0}, 1000000, 21);
  EXPECT_NEAR(s.unadjusted.target, 1.0 / 102, 1e-15);
  EXPECT_NEAR(s.unadjusted.estimate, s.unadjusted.target, 3 * s.unadjusted.se);
  EXPECT_NEAR(s.adjusted.estimate, 0.5, 3 * s.adjusted.se);
}

TEST(BiasDemoProperty, NoConfoundingRecoversTau) {
  const BiasDemoReport r = bias_demo(BiasKind::z_bias, {1, 0, 1, 0, 0.7}, 100000, 22);
  EXPECT_NEAR(r.unadjusted.estimate, 0.7, 3 * r.unadjusted.se);
  EXPECT_NEAR(r.adjusted.estimate, 0.7, 3 * r.adjusted.se);
}
