#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "bridgekit/features.hpp"

using namespace bridgekit;

namespace {

// Number of monomials of total degree <= D in d variables, by direct enumeration.
int count_monomials(int d, int D) {
  int count = 0;
  std::vector<int> e(d, 0);
  std::function<void(int, int)> rec = [&](int var, int left) {
    if (var == d) {
      ++count;
      return;
    }
    for (int k = 0; k <= left; ++k) rec(var + 1, left - k);
  };
  rec(0, D);
  return count;
}

}  // namespace

TEST(FeatureCount, AffineIsStatePlusBiasTimesTimeTerms) {
  for (int d : {1, 2, 5, 20}) {
    for (int R : {0, 1, 2, 3}) {
      EXPECT_EQ(FeatureLibrary::affine(d, R).feature_count(), (d + 1) * (R + 1));
      EXPECT_EQ(FeatureLibrary::affine(d, R, false).feature_count(), d * (R + 1));
    }
  }
}

TEST(FeatureCount, MonomialMatchesEnumeration) {
  for (int d : {1, 2, 3, 8}) {
    for (int D : {1, 2, 3}) {
      for (int R : {0, 2}) {
        EXPECT_EQ(FeatureLibrary::monomial(d, D, R).feature_count(), count_monomials(d, D) * (R + 1));
        EXPECT_EQ(FeatureLibrary::monomial(d, D, R, false).feature_count(), (count_monomials(d, D) - 1) * (R + 1));
      }
    }
  }
  EXPECT_EQ(FeatureLibrary::monomial(8, 2, 2).feature_count(), 135);
}

TEST(FeatureEval, AffineTimeMajorOrder) {
  const auto lib = FeatureLibrary::affine(2, 2);
  Vector x(2);
  x << 1.0, 2.0;
  const Vector f = lib.eval(x, 0.5);
  Vector expected(9);
  expected << 1.0, 2.0, 1.0, 0.5, 1.0, 0.5, 0.25, 0.5, 0.25;
  EXPECT_EQ(f, expected);
  const std::vector<std::string> names = {"x1", "x2", "1", "x1*t", "x2*t", "t", "x1*t^2", "x2*t^2", "t^2"};
  EXPECT_EQ(lib.names(), names);
}

TEST(FeatureEval, TimeZeroLeavesOnlyFirstBlock) {
  const auto lib = FeatureLibrary::monomial(3, 2, 2);
  Vector x(3);
  x << 0.3, -1.2, 2.0;
  const Vector f = lib.eval(x, 0.0);
  const int S = lib.state_feature_count();
  EXPECT_EQ(f.segment(S, 2 * S), Vector::Zero(2 * S));
}

TEST(FeatureEval, MonomialsMatchTheirNames) {
  // Evaluate each named monomial independently from its name string.
  const auto lib = FeatureLibrary::monomial(3, 3, 1);
  Vector x(3);
  x << 1.3, -0.7, 2.1;
  const double t = 0.6;
  const Vector f = lib.eval(x, t);
  const auto names = lib.names();
  ASSERT_EQ(static_cast<int>(names.size()), lib.feature_count());
  for (std::size_t k = 0; k < names.size(); ++k) {
    double v = 1.0;
    std::string rest = names[k];
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      const std::size_t star = rest.find('*', pos);
      const std::string factor = rest.substr(pos, star == std::string::npos ? std::string::npos : star - pos);
      const std::size_t caret = factor.find('^');
      const std::string base = factor.substr(0, caret);
      const int power = caret == std::string::npos ? 1 : std::stoi(factor.substr(caret + 1));
      double b = 1.0;
      if (base == "t") b = t;
      else if (base != "1") b = x(std::stoi(base.substr(1)) - 1);
      v *= std::pow(b, power);
      if (star == std::string::npos) break;
      pos = star + 1;
    }
    EXPECT_NEAR(f(static_cast<Eigen::Index>(k)), v, 1e-12) << names[k];
  }
}

TEST(FeatureNames, GradedLexAndUnindexedScalar) {
  const auto lib = FeatureLibrary::monomial(2, 2, 0);
  const std::vector<std::string> names = {"1", "x1", "x2", "x1^2", "x1*x2", "x2^2"};
  EXPECT_EQ(lib.names(), names);
  const auto scalar = FeatureLibrary::affine(1, 1);
  const std::vector<std::string> sn = {"x", "1", "x*t", "t"};
  EXPECT_EQ(scalar.names(), sn);
}

TEST(FeatureEval, DimensionMismatchThrows) {
  const auto lib = FeatureLibrary::affine(3, 1);
  EXPECT_THROW(lib.eval(Vector::Zero(2), 0.1), DimensionError);
}

TEST(Describe, FormatsSignsAndZeroRows) {
  const auto lib = FeatureLibrary::affine(2, 1);
  Matrix W = Matrix::Zero(2, lib.feature_count());
  W(0, 0) = -1.25;
  W(0, 3) = 0.5;
  W(0, 5) = -0.0001;
  const auto rows = describe(lib, W, 1e-3);
  EXPECT_EQ(rows[0], "-1.250·x1 + 0.500·x1*t");
  EXPECT_EQ(rows[1], "0");
  EXPECT_THROW(describe(lib, Matrix::Zero(2, 3), 0.0), DimensionError);
}

TEST(FeatureLibraryJson, RoundTrip) {
  const auto lib = FeatureLibrary::monomial(4, 2, 3, false);
  EXPECT_EQ(nlohmann::json(lib).get<FeatureLibrary>(), lib);
}

TEST(Binomial, SmallValues) {
  EXPECT_EQ(binomial(10, 2), 45);
  EXPECT_EQ(binomial(5, 0), 1);
  EXPECT_EQ(binomial(7, 7), 1);
}
