#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace causalkit;
using testutil::Gen;

namespace {

double upper_normal(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

const SurvivorCounts kArds{54, 268, 109, 59, 218, 152};

}  // namespace

TEST(Manski, BinaryHalfHalf) {
  Vec z(4), y(4);
  z << 1, 1, 0, 0;
  y << 1, 0, 1, 0;
  const auto b = manski_bounds(z, y, 0, 1);
  EXPECT_DOUBLE_EQ(b.lower, -0.5);
  EXPECT_DOUBLE_EQ(b.upper, 0.5);
}

TEST(Manski, WidthAndAllTreated) {
  Gen g(1);
  const Vec z = g.cre(30, 11);
  Vec y(30);
  for (int i = 0; i < 30; ++i) y[i] = 2 + 3 * g.unif();
  const auto b = manski_bounds(z, y, 2, 5);
  EXPECT_NEAR(b.upper - b.lower, 3.0, 1e-12);
  const Vec ones = Vec::Ones(30);
  const auto t = manski_bounds(ones, y, 2, 5);
  EXPECT_NEAR(t.lower, y.mean() - 5, 1e-12);
  EXPECT_NEAR(t.upper, y.mean() - 2, 1e-12);
  y[0] = 6;
  EXPECT_THROW(manski_bounds(z, y, 2, 5), ValidationError);
}

TEST(Survivor, ArdsTable) {
  const auto p = survivor_point(kArds);
  EXPECT_NEAR(p.pi11, 0.646, 1e-3);
  EXPECT_NEAR(p.pi00, 0.253, 1e-3);
  EXPECT_NEAR(p.pi10, 0.101, 1e-3);
  EXPECT_NEAR(p.mu1_lower, 0.037, 1e-3);
  EXPECT_NEAR(p.mu1_upper, 0.194, 1e-3);
  EXPECT_NEAR(p.lower, -0.176, 1e-3);
  EXPECT_NEAR(p.upper, -0.019, 1e-3);
}

TEST(Survivor, ArdsImbensManskiInterval) {
  const auto b = survivor_bounds(kArds, 0.05, 1000, 2024);
  ASSERT_TRUE(b.ci.has_value());
  EXPECT_NEAR(b.ci->lo, -0.267, 0.02);
  EXPECT_NEAR(b.ci->hi, 0.039, 0.02);
  EXPECT_THROW(survivor_bounds(kArds, 0.05, 100), ValidationError);
}

TEST(Survivor, PointIdentifiedWithoutProtectedStratum) {
  const auto p = survivor_point({30, 70, 25, 40, 60, 25});
  EXPECT_NEAR(p.pi10, 0.0, 1e-15);
  EXPECT_NEAR(p.lower, p.upper, 1e-15);
}

TEST(Survivor, MonotonicityViolationRejected) {
  EXPECT_THROW(survivor_point({10, 10, 80, 10, 10, 20}), ValidationError);
}

TEST(Survivor, BoundsStayInUnitRange) {
  Gen g(2);
  for (int r = 0; r < 500; ++r) {
    SurvivorCounts c{std::floor(1 + 50 * g.unif()), std::floor(1 + 50 * g.unif()), std::floor(50 * g.unif()),
                     std::floor(1 + 50 * g.unif()), std::floor(1 + 50 * g.unif()), 0};
    c.z0_m0 = std::floor(c.z1_m0 + 1 + 30 * g.unif());
    const double m1 = (c.z1_m1_y1 + c.z1_m1_y0) / (c.z1_m1_y1 + c.z1_m1_y0 + c.z1_m0);
    const double m0 = (c.z0_m1_y1 + c.z0_m1_y0) / (c.z0_m1_y1 + c.z0_m1_y0 + c.z0_m0);
    if (m1 < m0) continue;
    const auto p = survivor_point(c);
    EXPECT_GE(p.lower, -1.0);
    EXPECT_LE(p.upper, 1.0);
    EXPECT_LE(p.lower, p.upper + 1e-15);
  }
}

TEST(Rosenbaum, GammaOneSignMatchesBinomialApproximation) {
  Gen g(3);
  const Vec d = g.normals(37).array() + 0.3;
  double pos = 0;
  for (int i = 0; i < 37; ++i) pos += d[i] > 0;
  const double p = upper_normal((pos - 37 / 2.0) / std::sqrt(37 / 4.0));
  EXPECT_NEAR(rosenbaum_pvalue(d, 1.0, RosenbaumStat::sign), p, 1e-9);
}

TEST(Rosenbaum, GammaOneSignedRankMatchesClassicalMoments) {
  Gen g(4);
  const Vec d = g.normals(25).array() + 0.4;
  const int n = 25;
  // ranks of |d| by counting
  double w = 0;
  for (int i = 0; i < n; ++i) {
    if (d[i] <= 0) continue;
    int rank = 1;
    for (int j = 0; j < n; ++j) rank += std::abs(d[j]) < std::abs(d[i]);
    w += rank;
  }
  const double e = n * (n + 1) / 4.0, v = n * (n + 1) * (2 * n + 1) / 24.0;
  EXPECT_NEAR(rosenbaum_pvalue(d, 1.0, RosenbaumStat::signed_rank), upper_normal((w - e) / std::sqrt(v)), 1e-9);
}

TEST(Rosenbaum, MonotoneInGammaAndRejectsBelowOne) {
  Gen g(5);
  const Vec d = g.normals(40).array() + 0.5;
  double prev = 0;
  for (double gm = 1; gm < 6; gm += 0.25) {
    const double p = rosenbaum_pvalue(d, gm);
    EXPECT_GE(p, prev - 1e-15);
    prev = p;
  }
  EXPECT_THROW(rosenbaum_pvalue(d, 0.9), ValidationError);
}

TEST(GammaCurve, SinglePointAndStrongEffect) {
  Gen g(6);
  const Vec weak = g.normals(30);
  const auto one = gamma_curve(weak, {1.0});
  ASSERT_EQ(one.values.size(), 1u);
  EXPECT_DOUBLE_EQ(one.values[0], rosenbaum_pvalue(weak, 1.0));

  const Vec strong = (g.normals(60).array() * 0.5 + 2.0).matrix();
  std::vector<double> grid;
  for (double v = 1; v <= 6 + 1e-9; v += 0.05) grid.push_back(v);
  const auto c = gamma_curve(strong, grid);
  ASSERT_TRUE(c.gamma_star.has_value());
  EXPECT_GT(*c.gamma_star, 2.0);
  EXPECT_LT(rosenbaum_pvalue(strong, *c.gamma_star_grid), 0.05);
  if (*c.gamma_star < grid.back()) {
    EXPECT_NEAR(rosenbaum_pvalue(strong, *c.gamma_star), 0.05, 1e-6);
  }
}

TEST(Epsilon, UnitParametersReduceToStandardEstimators) {
  Gen g(7);
  const int n = 300;
  const Mat x = g.normals(n, 2);
  Vec e(n);
  for (int i = 0; i < n; ++i) e[i] = 1 / (1 + std::exp(-0.5 * x(i, 0)));
  const Vec z = g.bernoulli(e);
  const Vec y = x.col(0) + z + g.normals(n);
  const Vec a = epsilon_point(z, y, x, 1, 1), b = ate_point(z, y, x);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(a[k], b[k], 1e-10) << k;
}

TEST(Epsilon, DecreasingInEpsZeroForPositiveOutcomes) {
  Gen g(8);
  const int n = 300;
  const Mat x = g.normals(n, 1);
  Vec e(n);
  for (int i = 0; i < n; ++i) e[i] = 1 / (1 + std::exp(-0.5 * x(i, 0)));
  const Vec z = g.bernoulli(e);
  const Vec y = (10 + x.col(0).array() + z.array() + g.normals(n).array()).matrix();
  const std::vector<double> grid = {0.5, 0.75, 1, 1.5, 2};
  const Mat m = epsilon_grid(z, y, x, grid, grid, EpsEstimator::dr);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 1; j < m.cols(); ++j) EXPECT_LT(m(i, j), m(i, j - 1));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 1; i < m.rows(); ++i) EXPECT_LT(m(i, j), m(i - 1, j));
  EXPECT_THROW(epsilon_grid(z, y, x, {0.0}, {1.0}, EpsEstimator::dr), ValidationError);
}
