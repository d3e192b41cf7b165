#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace causalkit;
using testutil::Gen;

namespace {

Vec running(int n) { return Vec::LinSpaced(n, -1.0, 1.0); }

}  // namespace

TEST(SharpRdd, ExactLinearJump) {
  const Vec x = running(101);
  Vec y(101);
  for (int i = 0; i < 101; ++i) y[i] = x[i] >= 0 ? 3 + 0.5 * x[i] : 1 - 2 * x[i];
  const auto r = sharp_rdd(x, y, {0.0});
  EXPECT_NEAR(r.estimate, 2.0, 1e-12);
  EXPECT_LT(r.se, 1e-10);
}

TEST(SharpRdd, OneSidedWindowRejected) {
  const Vec x = running(101);
  EXPECT_THROW(sharp_rdd(x, x, {0.995, 0.004}), ValidationError);
  EXPECT_THROW(sharp_rdd(x, x, {0.0, -1.0}), ValidationError);
}

TEST(SharpRdd, WindowIncludesBoundary) {
  Vec x(10);
  x << -0.5, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.5;
  const auto w = rdd_window(x, {0.0, 0.5});
  EXPECT_EQ(w.rows.size(), 10u);
}

TEST(SharpRdd, AgreesWithPooledInteractedRegression) {
  // same jump from OLS of y on (1, Z, x, Z x) with x centered at the cutoff
  Gen g(1);
  const int n = 200;
  Vec x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 2 * g.unif() - 1 + 0.3;
    y[i] = 0.5 * x[i] + (x[i] >= 0.3 ? 1.2 : 0.0) + 0.3 * g.normal();
  }
  Mat d(n, 4);
  for (int i = 0; i < n; ++i) {
    const double c = x[i] - 0.3, z = c >= 0;
    d.row(i) << 1, z, c, z * c;
  }
  const auto o = testutil::naive_wls(d, y, Vec::Ones(n));
  const auto hc0 = testutil::naive_hc(d, Vec::Ones(n), o, 0);
  const auto r = sharp_rdd(x, y, {0.3});
  EXPECT_NEAR(r.estimate, o.beta[1], 1e-10);
  EXPECT_NEAR(r.se, std::sqrt(hc0[1][1]), 1e-10);
}

TEST(SharpRdd, SignEquivariance) {
  Gen g(2);
  const int n = 150;
  Vec x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 2 * g.unif() - 1;
    y[i] = x[i] + (x[i] >= 0) + g.normal();
  }
  // reflect about the cutoff and negate; ties at exactly zero have probability 0
  const Vec xr = -x, yr = -y;
  const double a = sharp_rdd(x, y, {0.0, 0.8}).estimate;
  const double b = sharp_rdd(xr, yr, {0.0, 0.8}).estimate;
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(FuzzyRdd, RatioOfSharpJumps) {
  Gen g(3);
  const int n = 300;
  Vec x(n), d(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 2 * g.unif() - 1;
    d[i] = g.unif() < (x[i] >= 0 ? 0.8 : 0.2);
    y[i] = x[i] + 1.5 * d[i] + g.normal();
  }
  const RddSpec s{0.0, 0.7};
  const double ratio = sharp_rdd(x, y, s).estimate / sharp_rdd(x, d, s).estimate;
  EXPECT_NEAR(fuzzy_rdd(x, d, y, s).estimate, ratio, 1e-10);
  Vec z(n);
  for (int i = 0; i < n; ++i) z[i] = x[i] >= 0;
  const auto f = fuzzy_rdd(x, z, y, s), sh = sharp_rdd(x, y, s);
  EXPECT_NEAR(f.estimate, sh.estimate, 1e-12);
  EXPECT_NEAR(f.se, sh.se, 1e-12);
  EXPECT_THROW(fuzzy_rdd(x, x.cwiseAbs(), y, s), WeakInstrumentError);
}

TEST(Sweep, SingletonAndErrorsRecorded) {
  Gen g(4);
  const Vec x = running(201);
  Vec y(201);
  for (int i = 0; i < 201; ++i) y[i] = x[i] + (x[i] >= 0) + 0.1 * g.normal();
  const auto one = bandwidth_sweep(x, y, std::nullopt, 0.0, {0.5});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].report->estimate, sharp_rdd(x, y, {0.0, 0.5}).estimate);
  const auto sw = bandwidth_sweep(x, y, std::nullopt, 0.0, {0.01, 0.5});
  EXPECT_FALSE(sw[0].report.has_value());
  EXPECT_FALSE(sw[0].error.empty());
  EXPECT_TRUE(sw[1].report.has_value());
}

TEST(Sweep, GloballyLinearTruthConstantAcrossBandwidths) {
  const Vec x = running(201);
  const Vec y = (2 * x.array() + 0.75 * (x.array() >= 0).cast<double>()).matrix();
  for (const auto& p : bandwidth_sweep(x, y, std::nullopt, 0.0, step_grid(0.1, 1.0, 0.1)))
    EXPECT_NEAR(p.report->estimate, 0.75, 1e-10) << p.h;
}

TEST(Sweep, QuadraticTruthBiasShrinksSeGrows) {
  Gen g(5);
  const int n = 4001;
  const Vec x = running(n);
  Vec clean(n), noisy(n);
  for (int i = 0; i < n; ++i) {
    clean[i] = x[i] >= 0 ? 1 + x[i] * x[i] : 0.0;
    noisy[i] = clean[i] + 0.5 * g.normal();
  }
  const std::vector<double> grid = {0.1, 0.2, 0.4, 0.8};
  const auto b = bandwidth_sweep(x, clean, std::nullopt, 0.0, grid);
  const auto s = bandwidth_sweep(x, noisy, std::nullopt, 0.0, grid);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    EXPECT_GT(std::abs(b[k].report->estimate - 1), std::abs(b[k - 1].report->estimate - 1));
    EXPECT_LT(s[k].report->se, s[k - 1].report->se);
  }
}

TEST(Sweep, StepGridInclusive) {
  const auto g = step_grid(0.1, 0.5, 0.1);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_NEAR(g.back(), 0.5, 1e-12);
}
