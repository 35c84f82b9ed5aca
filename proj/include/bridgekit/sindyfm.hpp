#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "json.hpp"

#include "bridgekit/common.hpp"
#include "bridgekit/dynamics.hpp"
#include "bridgekit/endpoints.hpp"
#include "bridgekit/features.hpp"
#include "bridgekit/interp.hpp"
#include "bridgekit/sparsereg.hpp"

namespace bridgekit {

/// Flow-matching supervision: rows (x, t, xdot) grouped into N trajectories of m
/// points each, times sorted ascending within a trajectory. The endpoints of each
/// trajectory are kept so every row can be re-derived.
struct FMDataset {
  Samples X;
  Vector T;
  Samples Xdot;
  Samples X0;  // N x dim
  Samples X1;  // N x dim
  int n_trajectories = 0;
  int points_per_traj = 0;

  Eigen::Index rows() const { return X.rows(); }
  int dim() const { return static_cast<int>(X.cols()); }
};

/// Samples N independent endpoint pairs, m sorted U[0,1] times each, and records
/// x = gamma(t; x0, x1), xdot = d/dt gamma exactly. Trajectory i draws from its
/// own stream derive_stream(seed, i), so the result does not depend on the
/// thread count. Only the linear interpolant has a time derivative here.
FMDataset build_dataset(const EndpointSampler& endpoints, const Interpolant& interpolant, int N,
                        int m, std::uint64_t seed);

/// Normal equations of Theta = [Xi(x_i, t_i)] against Xdot, accumulated in
/// fixed row blocks (OpenMP) and reduced in block order.
NormalEquations accumulate_normal_equations(const FMDataset& ds, const FeatureLibrary& lib);

/// Full design matrix Theta (rows x p).
Matrix design_matrix(const FMDataset& ds, const FeatureLibrary& lib);

struct FitMeta {
  SparseSolverConfig solver;
  double training_loss = 0.0;
  int active_count = 0;
  double train_seconds = 0.0;
  int iterations = 0;
  bool converged = false;
  bool all_zero = false;
  bool normalize_columns = false;
  // Free-form provenance written by callers (scenario, seed, dataset sizes).
  nlohmann::json source = nlohmann::json::object();
};

/// v(x, t) = W Xi(x, t).
struct SymbolicDrift {
  FeatureLibrary library;
  Matrix W;  // dim x p
  FitMeta fit_meta;

  int dim() const { return library.dim(); }
  void evaluate(std::span<const double> x, double t, std::span<double> out) const;
  Vector operator()(const Vector& x, double t) const;
  DriftFn as_drift() const;
  std::vector<std::string> describe(double zero_tol = 1e-10) const {
    return bridgekit::describe(library, W, zero_tol);
  }
};

struct FitOptions {
  // Rescale feature columns to unit RMS before solving; thresholds then act on
  // the rescaled coefficients, which are mapped back to raw units afterwards.
  bool normalize_columns = false;
  // Active-count tolerance recorded in fit_meta.
  double zero_tol = 1e-10;
};

/// Fits the sparse drift on the dataset. Records the mean-squared training loss
/// and the wall-clock time of feature assembly plus solve.
SymbolicDrift fit(const FMDataset& ds, const FeatureLibrary& lib, const SparseSolverConfig& cfg,
                  const FitOptions& options = {});

/// (1 / rows) sum_i ||W Xi(x_i, t_i) - xdot_i||^2.
double training_loss(const SymbolicDrift& model, const FMDataset& ds);

void to_json(nlohmann::json& j, const FitMeta& m);
void from_json(const nlohmann::json& j, FitMeta& m);

/// {library, W, fit_meta}; doubles are written in shortest round-trip form.
nlohmann::json serialize(const SymbolicDrift& model);
/// Throws DimensionError when W does not match the library.
SymbolicDrift deserialize(const nlohmann::json& doc);

namespace reference {

FMDataset build_dataset(const EndpointSampler& endpoints, const Interpolant& interpolant, int N,
                        int m, std::uint64_t seed);
NormalEquations accumulate_normal_equations(const FMDataset& ds, const FeatureLibrary& lib);

}  // namespace reference

}  // namespace bridgekit
