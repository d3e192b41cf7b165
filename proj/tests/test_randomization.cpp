#include <gtest/gtest.h>

#include <map>
#include <set>

#include "test_util.hpp"

using namespace causalkit;
using testutil::Gen;

namespace {

Vec darwin_diffs() {
  const Dataset ds = load_csv(testutil::data_file("darwin.csv"), {{"diff", ColumnRole::outcome}});
  return ds.column("diff");
}

struct Tv {
  IVec pair;
  Vec z, x, y;
};

Tv electric() {
  const Dataset ds = load_csv(testutil::data_file("electric_company.csv"), {});
  return {encode_labels(ds.column("pair")), ds.column("z"), ds.column("pretest"), ds.column("posttest")};
}

std::string key(const Vec& z) {
  std::string s;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += z[i] == 1.0 ? '1' : '0';
  return s;
}

}  // namespace

TEST(Enumerate, CreCountAndDistinct) {
  const auto all = enumerate_assignments(AssignmentDesign::cre(3, 2));
  ASSERT_EQ(all.size(), 10u);
  std::set<std::string> seen;
  for (const Vec& z : all) {
    EXPECT_EQ(z.sum(), 3.0);
    seen.insert(key(z));
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Enumerate, MpeFifteenPairs) { EXPECT_EQ(support_size(AssignmentDesign::mpe(15)), 32768u); }

TEST(Enumerate, SreIsProductOfStrata) {
  const auto d = AssignmentDesign::sre({0, 0, 0, 0, 1, 1}, {2, 1});
  const auto all = enumerate_assignments(d);
  ASSERT_EQ(all.size(), 12u);
  std::set<std::string> seen;
  for (const Vec& z : all) {
    EXPECT_EQ(z.head(4).sum(), 2.0);
    EXPECT_EQ(z.tail(2).sum(), 1.0);
    seen.insert(key(z));
  }
  EXPECT_EQ(seen.size(), 12u);
}

TEST(Enumerate, CapDirectsToMonteCarlo) {
  EXPECT_THROW(enumerate_assignments(AssignmentDesign::mpe(30), 1u << 20), ValidationError);
}

TEST(Sample, CreIsUniform) {
  const auto d = AssignmentDesign::cre(2, 2);
  std::map<std::string, int> freq;
  const int R = 10000;
  for (int r = 0; r < R; ++r) {
    Rng rng(5, r);
    ++freq[key(sample_assignment(d, rng))];
  }
  ASSERT_EQ(freq.size(), 6u);
  const double se = std::sqrt((1.0 / 6) * (5.0 / 6) / R);
  for (const auto& [k, c] : freq) EXPECT_NEAR(c / double(R), 1.0 / 6, 3 * se) << k;
}

TEST(Sample, RemInfiniteThresholdIsCre) {
  Gen g(3);
  const Mat x = g.normals(10, 2);
  const auto rem = AssignmentDesign::rem(5, 5, x, std::numeric_limits<double>::infinity());
  const auto cre = AssignmentDesign::cre(5, 5);
  for (int r = 0; r < 50; ++r) {
    Rng a(9, r), b(9, r);
    EXPECT_EQ(key(sample_assignment(rem, a)), key(sample_assignment(cre, b)));
  }
}

TEST(Sample, RemAcceptsOnlyBelowThreshold) {
  Gen g(4);
  const Mat x = g.normals(20, 2);
  const auto d = AssignmentDesign::rem(10, 10, x, 0.5);
  for (int r = 0; r < 200; ++r) {
    Rng rng(2, r);
    EXPECT_LE(mahalanobis(sample_assignment(d, rng), x), 0.5 + 1e-12);
  }
}

TEST(Mahalanobis, AffineInvarianceAndScalarCase) {
  Gen g(6);
  const Mat x = g.normals(30, 3);
  const Vec z = g.cre(30, 12);
  Mat B(3, 3);
  B << 2, 1, 0, 0, 1, -1, 1, 0, 3;
  const Mat xt = (x * B.transpose()).rowwise() + Eigen::RowVector3d(5, -2, 1);
  EXPECT_NEAR(mahalanobis(z, x), mahalanobis(z, xt), 1e-9);

  const Vec x1 = x.col(0);
  const IVec t = where(z, 1.0), c = where(z, 0.0);
  const double tau = subset(x1, t).mean() - subset(x1, c).mean();
  const double m = tau * tau / ((30.0 / (12 * 18)) * testutil::var1(x1));
  EXPECT_NEAR(mahalanobis(z, Mat(x1)), m, 1e-10);
}

TEST(Mahalanobis, SingularCovariatesNameColumn) {
  Gen g(7);
  Mat x = g.normals(10, 2);
  Mat xx(10, 3);
  xx << x, x.col(0) * 2;
  try {
    mahalanobis(g.cre(10, 5), xx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Statistic, WilcoxonAndKsToyValues) {
  Vec y(4), z(4);
  y << 1, 2, 3, 4;
  z << 0, 0, 1, 1;
  const FrtData d = FrtData::units(y);
  EXPECT_DOUBLE_EQ(compute_statistic({StatId::wilcoxon}, z, d), 7.0);
  Vec y2(4), z2(4);
  y2 << 1, 2, 1, 2;
  z2 << 1, 1, 0, 0;
  EXPECT_DOUBLE_EQ(compute_statistic({StatId::ks}, z2, FrtData::units(y2)), 0.0);
}

TEST(Statistic, PairStatisticOnUnitDataRejected) {
  Vec y(4), z(4);
  y << 1, 2, 3, 4;
  z << 0, 0, 1, 1;
  EXPECT_THROW(compute_statistic({StatId::pair_mean}, z, FrtData::units(y)), ValidationError);
  EXPECT_THROW(compute_statistic({StatId::strat_diff}, z, FrtData::units(y)), ValidationError);
}

TEST(Frt, DarwinExact) {
  const Vec d = darwin_diffs();
  const auto r = frt(FrtData::pairs(d), Vec::Ones(15), AssignmentDesign::mpe(15), {StatId::pair_mean});
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.count, 32768u);
  EXPECT_NEAR(r.p_hat, 0.02633667, 5e-9);
  EXPECT_EQ(r.p_hat * 32768, std::round(r.p_hat * 32768));
}

TEST(Frt, ChildrensTvExactPairT) {
  const Tv tv = electric();
  FrtOptions o;
  o.two_sided = true;
  const auto unadj = frt(FrtData::pairs_from_units(tv.pair, tv.z, tv.y), Vec::Ones(8), AssignmentDesign::mpe(8),
                         {StatId::pair_t}, o);
  EXPECT_DOUBLE_EQ(unadj.p_hat, 0.03125);
  const auto adj = frt(FrtData::pairs_from_units(tv.pair, tv.z, tv.y, Mat(tv.x)), Vec::Ones(8),
                       AssignmentDesign::mpe(8), {StatId::pair_t}, o);
  EXPECT_DOUBLE_EQ(adj.p_hat, 0.0078125);
}

TEST(Frt, MonteCarloDeterministicAcrossThreads) {
  Gen g(8);
  const Vec y = g.normals(40);
  const Vec z = g.cre(40, 20);
  FrtOptions o;
  o.mode = FrtMode::monte_carlo;
  o.reps = 2000;
  o.seed = 77;
  set_threads(1);
  const auto a = frt(FrtData::units(y), z, AssignmentDesign::cre(20, 20), {StatId::student_t}, o);
  set_threads(3);
  const auto b = frt(FrtData::units(y), z, AssignmentDesign::cre(20, 20), {StatId::student_t}, o);
  set_threads(0);
  EXPECT_EQ(a.p_hat, b.p_hat);
  EXPECT_EQ(a.p_valid, b.p_valid);
  EXPECT_GE(a.p_valid, a.p_hat * a.count / (a.count + 1.0));
  EXPECT_GT(a.p_valid, 0.0);
  ASSERT_TRUE(a.mc_se.has_value());
}

TEST(Frt, MonteCarloNeedsSeed) {
  FrtOptions o;
  o.mode = FrtMode::monte_carlo;
  Vec y = Vec::LinSpaced(6, 0, 5), z(6);
  z << 1, 1, 1, 0, 0, 0;
  EXPECT_THROW(frt(FrtData::units(y), z, AssignmentDesign::cre(3, 3), {}, o), ValidationError);
}

TEST(Frt, ExactPValueIsCountOverSupport) {
  Vec y(6), z(6);
  y << 3, 1, 4, 1, 5, 9;
  z << 1, 0, 1, 0, 1, 0;
  const auto r = frt(FrtData::units(y), z, AssignmentDesign::cre(3, 3), {StatId::diff_means});
  int hits = 0;
  const double t0 = compute_statistic({StatId::diff_means}, z, FrtData::units(y));
  for (const Vec& zz : enumerate_assignments(AssignmentDesign::cre(3, 3)))
    hits += compute_statistic({StatId::diff_means}, zz, FrtData::units(y)) >= t0 - 1e-12;
  EXPECT_DOUBLE_EQ(r.p_hat, hits / 20.0);
}

// Wilcoxon null moments by exhaustive enumeration.
TEST(Frt, WilcoxonNullMoments) {
  const int n = 8, n1 = 3;
  Vec y(n);
  y << 2.1, 0.3, 5, 4.4, -1, 7, 3.3, 6;
  const FrtData d = FrtData::units(y);
  double s = 0, s2 = 0, m = 0;
  for (const Vec& z : enumerate_assignments(AssignmentDesign::cre(n1, n - n1))) {
    const double w = compute_statistic({StatId::wilcoxon}, z, d);
    s += w;
    s2 += w * w;
    ++m;
  }
  const double mean = s / m, var = s2 / m - mean * mean;
  EXPECT_NEAR(mean, n1 * (n + 1) / 2.0, 1e-12);
  EXPECT_NEAR(var, n1 * (n - n1) * (n + 1) / 12.0, 1e-10);
}

TEST(Ks, AsymptoticTail) {
  EXPECT_EQ(ks_asymptotic_pvalue(0.0, 10, 10), 1.0);
  EXPECT_LT(ks_asymptotic_pvalue(0.99, 100, 100), 1e-6);
  // at x = 1 the Kolmogorov upper tail is 0.26999967...
  const double d = 1.0 / std::sqrt(50.0 * 50 / 100);
  EXPECT_NEAR(ks_asymptotic_pvalue(d, 50, 50), 0.2699996716735, 1e-9);
  EXPECT_THROW(ks_asymptotic_pvalue(1.5, 10, 10), ValidationError);
}

TEST(Ks, AsymptoticMatchesPermutationSimulation) {
  // n1 = n0 = 200, MC permutation law of D compared at the scaled point x = 1
  const int n1 = 200, n = 400;
  const double dcrit = 1.0 / std::sqrt(n1 * 200.0 / n);
  const Vec y = Vec::LinSpaced(n, 0, n - 1);
  const auto design = AssignmentDesign::cre(n1, n - n1);
  const int R = 20000;
  std::vector<double> dvals(R);
  parallel_for(R, [&](std::size_t r) {
    Rng rng(21, r);
    dvals[r] = detail::ks_two_sample(sample_assignment(design, rng), y);
  });
  double hits = 0;
  for (double v : dvals) hits += v >= dcrit - 1e-12;
  const double p = hits / R, se = std::sqrt(p * (1 - p) / R);
  // the discrete law at finite n sits slightly below the limit; allow 3 MC SEs plus the lattice gap
  EXPECT_NEAR(p, ks_asymptotic_pvalue(dcrit, n1, n - n1), 3 * se + 0.02);
}
