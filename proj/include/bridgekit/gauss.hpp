#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"

#include "bridgekit/common.hpp"

namespace bridgekit {

enum class Scenario { identity, diagonal, rotated, high_condition, asymmetric };

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view name);

enum class Side { source, target };

/// Source/target Gaussian endpoints N(mu0, sigma0) -> N(mu1, sigma1).
struct GaussianPair {
  int dim = 0;
  Vector mu0;
  Matrix sigma0;
  Vector mu1;
  Matrix sigma1;
  std::string scenario_name;
  std::uint64_t seed = 0;

  const Vector& mean(Side side) const { return side == Side::source ? mu0 : mu1; }
  const Matrix& cov(Side side) const { return side == Side::source ? sigma0 : sigma1; }
};

/// Scenario parameters as they appear in experiment configs.
struct ScenarioSpec {
  std::string name = "identity";
  int dim = 5;
  double mean_scale = 0.1;
  // Unset bounds fall back to the scenario default: (0.3, 3.0), or (0.01, 1.0)
  // for high_condition.
  std::optional<double> spectrum_lo;
  std::optional<double> spectrum_hi;
  std::uint64_t seed = 0;
  // Only used by high_condition: lambda_max / lambda_min of each emitted covariance.
  double condition_number = 100.0;
  // Only used by asymmetric: target spectrum range is the source range times this factor.
  double asymmetry_scale = 3.0;
};

/// Builds one of the five covariance scenarios.
///
/// mu0 = mean_scale * (1, ..., 1) / sqrt(dim) and mu1 = -mu0. Spectra are drawn
/// log-uniformly in [lo, hi]; rotated and asymmetric conjugate them by random
/// orthogonal matrices (QR of a Gaussian matrix, sign-corrected). Source and
/// target covariances use independent draws. high_condition pins the extreme
/// eigenvalues so that the condition number is at least condition_number.
GaussianPair make_scenario(Scenario name, int dim, double mean_scale,
                           std::pair<double, double> spectrum_range, std::uint64_t seed,
                           double condition_number = 100.0, double asymmetry_scale = 3.0);
GaussianPair make_scenario(const ScenarioSpec& spec);

std::pair<double, double> default_spectrum_range(Scenario name);

/// Haar-like orthogonal matrix from QR of a standard Gaussian matrix.
Matrix random_orthogonal(int dim, Rng& rng);

/// n i.i.d. rows from the requested marginal (Cholesky sampling).
/// Throws std::runtime_error when the covariance is not positive definite.
Samples sample(const GaussianPair& pair, Side side, Eigen::Index n, Rng& rng);
Samples sample_gaussian(const Vector& mean, const Matrix& cov, Eigen::Index n, Rng& rng);

struct Moments {
  Vector mean;
  Matrix cov;
};

/// Sample mean and unbiased covariance (divisor n - 1). Requires n >= 2.
Moments empirical_moments(const Samples& X);

/// 2-Wasserstein distance between N(mu_a, cov_a) and N(mu_b, cov_b).
double bures_w2(const Vector& mu_a, const Matrix& cov_a, const Vector& mu_b, const Matrix& cov_b);
inline double bures_w2(const Moments& a, const Moments& b) {
  return bures_w2(a.mean, a.cov, b.mean, b.cov);
}

/// PSD square root through a symmetric eigendecomposition, eigenvalues clamped at 0.
Matrix psd_sqrt(const Matrix& A);

/// Gaussian-fit W2: moments of the cloud against an analytic Gaussian.
double gaussian_fit_w2(const Samples& X, const Vector& mean, const Matrix& cov);

void to_json(nlohmann::json& j, const GaussianPair& p);
void from_json(const nlohmann::json& j, GaussianPair& p);
void to_json(nlohmann::json& j, const ScenarioSpec& s);
void from_json(const nlohmann::json& j, ScenarioSpec& s);

}  // namespace bridgekit
