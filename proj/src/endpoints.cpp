#include "bridgekit/endpoints.hpp"

namespace bridgekit {

namespace {

Matrix cholesky_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Cholesky factorization failed (covariance not positive definite)");
  }
  return llt.matrixL();
}

void draw(const Vector& mean, const Matrix& L, Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal;
  const Eigen::Index d = mean.size();
  Vector z(d);
  for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng);
  as_vector(out) = mean + L * z;
}

}  // namespace

GaussianEndpoints::GaussianEndpoints(GaussianPair pair)
    : pair_(std::move(pair)), chol0_(cholesky_factor(pair_.sigma0)), chol1_(cholesky_factor(pair_.sigma1)) {}

void GaussianEndpoints::sample_pair(Rng& rng, std::span<double> x0, std::span<double> x1) const {
  if (static_cast<int>(x0.size()) != pair_.dim || static_cast<int>(x1.size()) != pair_.dim) {
    throw DimensionError("GaussianEndpoints: buffer dimension mismatch");
  }
  draw(pair_.mu0, chol0_, rng, x0);
  draw(pair_.mu1, chol1_, rng, x1);
}

Samples GaussianEndpoints::sample_side(Side side, Eigen::Index n, Rng& rng) const {
  return sample(pair_, side, n, rng);
}

Moments GaussianEndpoints::marginal(Side side) const {
  return {pair_.mean(side), pair_.cov(side)};
}

PointMassEndpoints::PointMassEndpoints(Vector a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.size() != b_.size() || a_.size() == 0) {
    throw DimensionError("PointMassEndpoints: endpoints must share a positive dimension");
  }
}

void PointMassEndpoints::sample_pair(Rng&, std::span<double> x0, std::span<double> x1) const {
  if (x0.size() != static_cast<std::size_t>(a_.size()) ||
      x1.size() != static_cast<std::size_t>(a_.size())) {
    throw DimensionError("PointMassEndpoints: buffer dimension mismatch");
  }
  as_vector(x0) = a_;
  as_vector(x1) = b_;
}

Samples PointMassEndpoints::sample_side(Side side, Eigen::Index n, Rng&) const {
  const Vector& p = side == Side::source ? a_ : b_;
  Samples X(n, p.size());
  X.rowwise() = p.transpose();
  return X;
}

Moments PointMassEndpoints::marginal(Side side) const {
  const Eigen::Index d = a_.size();
  return {side == Side::source ? a_ : b_, Matrix::Zero(d, d)};
}

}  // namespace bridgekit
