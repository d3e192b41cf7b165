#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace causalkit;

namespace {

Dataset parse(const std::string& s, const RoleMap& roles = {}) {
  std::istringstream in(s);
  return parse_csv(in, roles);
}

}  // namespace

TEST(LoadCsv, FourRowFile) {
  const Dataset ds = parse("Z,Y\n1,2.5\n0,3\n1,-1\n0,4e1\n", {{"Z", ColumnRole::treatment}, {"Y", ColumnRole::outcome}});
  EXPECT_EQ(ds.rows(), 4u);
  EXPECT_DOUBLE_EQ(ds.column("Y")[3], 40.0);
  EXPECT_EQ(ds.single(ColumnRole::treatment), "Z");
  EXPECT_TRUE(validate(ds).empty());
}

TEST(LoadCsv, MissingDeclaredCovariateColumn) {
  EXPECT_THROW(parse("Z,Y\n1,2\n", {{"X", ColumnRole::covariate}}), ValidationError);
}

TEST(LoadCsv, DarwinFile) {
  const Dataset ds = load_csv(testutil::data_file("darwin.csv"), {{"diff", ColumnRole::outcome}});
  ASSERT_EQ(ds.rows(), 15u);
  EXPECT_DOUBLE_EQ(ds.column("diff")[1], -8.375);
  const Vec d = ds.column("diff"), c = ds.column("cross"), s = ds.column("self");
  for (int i = 0; i < 15; ++i) EXPECT_NEAR(d[i], c[i] - s[i], 1e-12);
}

TEST(LoadCsv, UnparseableCellReportsRowAndColumn) {
  try {
    parse("Z,Y\n1,2\n0,abc\n");
    FAIL();
  } catch (const ValidationError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("row 2"), std::string::npos);
    EXPECT_NE(m.find("'Y'"), std::string::npos);
  }
}

TEST(LoadCsv, DuplicateHeader) { EXPECT_THROW(parse("Z,Y,Z\n1,2,3\n"), ValidationError); }

TEST(LoadCsv, RaggedRow) { EXPECT_THROW(parse("Z,Y\n1,2,3\n"), ValidationError); }

TEST(LoadCsv, StringLabelsForStrata) {
  const Dataset ds = parse("Z,Y,S\n1,1,a\n0,2,b\n1,3,a\n", {{"S", ColumnRole::stratum}});
  EXPECT_EQ(ds.column("S")[0], ds.column("S")[2]);
  EXPECT_NE(ds.column("S")[0], ds.column("S")[1]);
}

TEST(Validate, NonBinaryTreatment) {
  const Dataset ds = parse("Z,Y\n1,1\n2,1\n0,1\n", {{"Z", ColumnRole::treatment}});
  const auto f = validate(ds);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].code, "non-binary treatment");
  EXPECT_EQ(f[0].rows, IVec{1});
}

TEST(Validate, SingletonPair) {
  const Dataset ds = parse("P,Y\n1,1\n1,2\n2,3\n", {{"P", ColumnRole::pair_id}});
  const auto f = validate(ds);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].code, "singleton pair");
  EXPECT_EQ(f[0].rows, IVec{2});
}

TEST(Validate, MissingInRoleColumnAndPurity) {
  const Dataset ds = parse("Z,Y,X\n1,NA,1\n0,2,\n", {{"Y", ColumnRole::outcome}});
  const auto a = validate(ds), b = validate(ds);
  ASSERT_EQ(a.size(), 1u);  // X has no role
  EXPECT_EQ(a[0].code, "missing");
  EXPECT_EQ(a, b);
  EXPECT_THROW(ds.column("Y"), ValidationError);
}

TEST(Dataset, ExplicitMeanImputation) {
  Dataset ds = parse("Y\n1\nNA\n3\n");
  ds.impute_mean("Y");
  EXPECT_DOUBLE_EQ(ds.column("Y")[1], 2.0);
}

TEST(Dataset, RoundTrip) {
  const Dataset a = parse("A,B,C\n0.1,NA,3\n1e-300,2,-0\n123456789.123456789,7,0.3333333333333333\n");
  std::ostringstream out;
  write_csv(a, out);
  const Dataset b = parse(out.str());
  EXPECT_TRUE(a == b);
}

TEST(Dataset, EncodeLabelsFirstAppearance) {
  Vec v(5);
  v << 7, 3, 7, 9, 3;
  EXPECT_EQ(encode_labels(v), (IVec{0, 1, 0, 2, 1}));
}
