#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "bridgekit/endpoints.hpp"

namespace bridgekit {

// Binary pair file: "BKLP", u32 version (1), u32 dim, u64 n_pairs, then n_pairs
// records of 2 * dim float32 (source then target). All fields little-endian.

class LatentFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class LatentMagicError : public LatentFormatError {
 public:
  using LatentFormatError::LatentFormatError;
};
class LatentDimError : public LatentFormatError {
 public:
  using LatentFormatError::LatentFormatError;
};
class LatentTruncatedError : public LatentFormatError {
 public:
  using LatentFormatError::LatentFormatError;
};

/// Writes rows of source/target as float32; both must be n x dim.
void write_latent_pairs(const std::string& path, const Samples& source, const Samples& target);

/// Stored pairs, drawn uniformly with replacement. The reference moments of each
/// side are the empirical moments of the stored rows.
class LatentPairs final : public EndpointSampler {
 public:
  LatentPairs(Samples source, Samples target);

  const Samples& source() const { return source_; }
  const Samples& target() const { return target_; }
  Eigen::Index size() const { return source_.rows(); }

  int dim() const override { return static_cast<int>(source_.cols()); }
  void sample_pair(Rng& rng, std::span<double> x0, std::span<double> x1) const override;
  Samples sample_side(Side side, Eigen::Index n, Rng& rng) const override;
  Moments marginal(Side side) const override;

 private:
  Samples source_;
  Samples target_;
  Moments m0_;
  Moments m1_;
};

/// Reads a pair file. expected_dim, when given, must match the header.
/// Throws LatentMagicError, LatentDimError or LatentTruncatedError; other
/// malformed input (bad version, trailing bytes) throws LatentFormatError.
LatentPairs ingest_latent_pairs(const std::string& path, std::optional<int> expected_dim = std::nullopt);

}  // namespace bridgekit
