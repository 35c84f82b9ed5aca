#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "bridgekit/sparsereg.hpp"

using namespace bridgekit;

namespace {

struct SparseProblem {
  Matrix Theta;
  Matrix Y;      // N x 1
  Vector truth;  // p
};

SparseProblem random_problem(Rng& rng, int p, int support_size, int rows = 200) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  SparseProblem pr{Matrix(rows, p), Matrix(rows, 1), Vector::Zero(p)};
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < p; ++j) pr.Theta(i, j) = n(rng);
  std::vector<int> idx(p);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int s = 0; s < support_size; ++s) pr.truth(idx[s]) = (n(rng) < 0 ? -1 : 1) * mag(rng);
  pr.Y = pr.Theta * pr.truth;
  return pr;
}

// Smallest support whose plain least-squares fit leaves a zero residual, found by
// trying every subset in order of size.
Vector exhaustive_sparsest(const Matrix& Theta, const Vector& y) {
  const int p = static_cast<int>(Theta.cols());
  for (int size = 0; size <= p; ++size) {
    std::vector<bool> pick(p, false);
    std::fill(pick.begin(), pick.begin() + size, true);
    do {
      std::vector<int> cols;
      for (int j = 0; j < p; ++j)
        if (pick[j]) cols.push_back(j);
      Vector c = Vector::Zero(p);
      if (!cols.empty()) {
        Matrix sub(Theta.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = Theta.col(cols[k]);
        const Vector cs = sub.colPivHouseholderQr().solve(y);
        for (std::size_t k = 0; k < cols.size(); ++k) c(cols[k]) = cs(static_cast<Eigen::Index>(k));
      }
      if ((Theta * c - y).norm() <= 1e-9 * std::max(1.0, y.norm())) return c;
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return Vector::Zero(p);
}

}  // namespace

TEST(SparseRecovery, StlsqAndSr3MatchExhaustiveEnumeration) {
  Rng rng(20240);
  std::uniform_int_distribution<int> pdist(3, 10);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = pdist(rng);
    const int k = std::uniform_int_distribution<int>(1, std::min(3, p))(rng);
    const auto pr = random_problem(rng, p, k);
    const Vector oracle = exhaustive_sparsest(pr.Theta, pr.Y.col(0));
    SparseSolverConfig cfg;
    for (SparseMethod m : {SparseMethod::stlsq, SparseMethod::sr3}) {
      cfg.method = m;
      const SparseFit fit = solve_sparse(NormalEquations::from_design(pr.Theta, pr.Y), cfg);
      const Vector w = fit.W.row(0).transpose();
      for (int j = 0; j < p; ++j) {
        EXPECT_EQ(w(j) != 0.0, oracle(j) != 0.0) << "trial " << trial << " method " << to_string(m);
      }
      EXPECT_LT((w - oracle).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    }
  }
}

TEST(LeastSquares, MatchesRidgeClosedForm) {
  Rng rng(3);
  const auto pr = random_problem(rng, 6, 6, 50);
  const double ridge = 0.7;
  const Matrix W = least_squares(pr.Theta, pr.Y, ridge);
  const Matrix expected =
      (pr.Theta.transpose() * pr.Theta + ridge * Matrix::Identity(6, 6)).ldlt().solve(pr.Theta.transpose() * pr.Y);
  EXPECT_LT((W.transpose() - expected).norm(), 1e-10);
}

TEST(LeastSquares, RankDeficientAndBadInput) {
  Matrix Theta(4, 2);
  Theta << 1, 2, 2, 4, 3, 6, 4, 8;
  Matrix Y = Matrix::Ones(4, 1);
  EXPECT_THROW(least_squares(Theta, Y, 0.0), RankDeficientError);
  EXPECT_NO_THROW(least_squares(Theta, Y, 1e-3));
  EXPECT_THROW(least_squares(Theta, Matrix::Ones(3, 1), 0.0), DimensionError);
  Y(0, 0) = std::nan("");
  EXPECT_THROW(least_squares(Theta, Y, 1e-3), std::invalid_argument);
}

TEST(NormalEquations, MeanLossMatchesDirectResidual) {
  Rng rng(5);
  const auto pr = random_problem(rng, 5, 2, 80);
  const auto ne = NormalEquations::from_design(pr.Theta, pr.Y);
  Matrix W = Matrix::Random(1, 5);
  const double direct = (pr.Theta * W.transpose() - pr.Y).squaredNorm() / 80.0;
  EXPECT_NEAR(ne.mean_loss(W), direct, 1e-12 * std::max(1.0, direct));
}

TEST(Sr3, RelaxedObjectiveNeverIncreases) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto pr = random_problem(rng, 8, 3);
    std::normal_distribution<double> n;
    for (int i = 0; i < pr.Y.rows(); ++i) pr.Y(i, 0) += 0.3 * n(rng);
    for (ThresholdKind kind : {ThresholdKind::hard, ThresholdKind::soft}) {
      SparseSolverConfig cfg;
      cfg.prox = kind;
      cfg.threshold = 0.3;
      cfg.debias = false;
      const SparseFit fit = sr3(pr.Theta, pr.Y, cfg);
      ASSERT_GE(fit.objective.size(), 2u);
      for (std::size_t i = 1; i < fit.objective.size(); ++i) {
        EXPECT_LE(fit.objective[i], fit.objective[i - 1] * (1 + 1e-12) + 1e-14);
      }
    }
  }
}

TEST(SparseFit, HugeThresholdGivesAllZero) {
  Rng rng(2);
  const auto pr = random_problem(rng, 4, 2);
  SparseSolverConfig cfg;
  cfg.threshold = 1e6;
  for (SparseMethod m : {SparseMethod::stlsq, SparseMethod::sr3}) {
    cfg.method = m;
    const SparseFit fit = solve_sparse(NormalEquations::from_design(pr.Theta, pr.Y), cfg);
    EXPECT_TRUE(fit.all_zero);
    EXPECT_EQ(count_active(fit.W, 0.0), 0);
  }
}

TEST(SparseFit, SurvivingCoefficientsClearTheThreshold) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto pr = random_problem(rng, 7, 4);
    std::normal_distribution<double> n;
    for (int i = 0; i < pr.Y.rows(); ++i) pr.Y(i, 0) += 0.5 * n(rng);
    SparseSolverConfig cfg;
    cfg.method = SparseMethod::stlsq;
    cfg.threshold = 0.4;
    const SparseFit fit = stlsq(pr.Theta, pr.Y, cfg);
    for (Eigen::Index j = 0; j < fit.W.cols(); ++j) {
      const double w = fit.W(0, j);
      EXPECT_TRUE(w == 0.0 || std::abs(w) >= 0.4 || !fit.converged);
    }
  }
}

TEST(SparseFit, MultipleOutputsSolveIndependently) {
  Rng rng(8);
  const auto a = random_problem(rng, 6, 2);
  Vector other = Vector::Zero(6);
  other(5) = 1.5;
  Matrix Y(a.Y.rows(), 2);
  Y.col(0) = a.Y.col(0);
  Y.col(1) = a.Theta * other;
  const SparseFit fit = sr3(a.Theta, Y, SparseSolverConfig{});
  EXPECT_LT((fit.W.row(0).transpose() - a.truth).norm(), 1e-6);
  EXPECT_LT((fit.W.row(1).transpose() - other).norm(), 1e-6);
}

TEST(SolverConfig, JsonRoundTripAndValidation) {
  SparseSolverConfig c;
  c.method = SparseMethod::stlsq;
  c.threshold = 0.2;
  c.prox = ThresholdKind::soft;
  const auto back = nlohmann::json(c).get<SparseSolverConfig>();
  EXPECT_EQ(back.method, c.method);
  EXPECT_EQ(back.threshold, c.threshold);
  EXPECT_EQ(back.prox, c.prox);
  EXPECT_THROW((nlohmann::json{{"nu", -1.0}}.get<SparseSolverConfig>()), std::invalid_argument);
  EXPECT_THROW((nlohmann::json{{"method", "lasso"}}.get<SparseSolverConfig>()), std::invalid_argument);
}
