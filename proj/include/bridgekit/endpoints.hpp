#pragma once

#include <span>

#include "bridgekit/common.hpp"
#include "bridgekit/gauss.hpp"

namespace bridgekit {

/// Source of (x0, x1) endpoint pairs plus the reference moments of each marginal
/// that the Gaussian-fit W2 is measured against.
class EndpointSampler {
 public:
  virtual ~EndpointSampler() = default;

  virtual int dim() const = 0;
  virtual void sample_pair(Rng& rng, std::span<double> x0, std::span<double> x1) const = 0;
  virtual Samples sample_side(Side side, Eigen::Index n, Rng& rng) const = 0;
  virtual Moments marginal(Side side) const = 0;
};

/// Independent draws from the two Gaussian marginals; Cholesky factors are cached.
class GaussianEndpoints final : public EndpointSampler {
 public:
  explicit GaussianEndpoints(GaussianPair pair);

  const GaussianPair& pair() const { return pair_; }

  int dim() const override { return pair_.dim; }
  void sample_pair(Rng& rng, std::span<double> x0, std::span<double> x1) const override;
  Samples sample_side(Side side, Eigen::Index n, Rng& rng) const override;
  Moments marginal(Side side) const override;

 private:
  GaussianPair pair_;
  Matrix chol0_;
  Matrix chol1_;
};

/// Deterministic endpoints a -> b (point masses).
class PointMassEndpoints final : public EndpointSampler {
 public:
  PointMassEndpoints(Vector a, Vector b);

  int dim() const override { return static_cast<int>(a_.size()); }
  void sample_pair(Rng& rng, std::span<double> x0, std::span<double> x1) const override;
  Samples sample_side(Side side, Eigen::Index n, Rng& rng) const override;
  Moments marginal(Side side) const override;

 private:
  Vector a_;
  Vector b_;
};

}  // namespace bridgekit
