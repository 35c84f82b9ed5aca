#pragma once

#include <string_view>
#include <vector>

#include "json.hpp"

#include "bridgekit/common.hpp"

namespace bridgekit {

enum class SparseMethod { stlsq, sr3 };
enum class ThresholdKind { hard, soft };

std::string_view to_string(SparseMethod m);
SparseMethod parse_sparse_method(std::string_view name);

struct SparseSolverConfig {
  SparseMethod method = SparseMethod::sr3;
  double threshold = 0.10;
  // Ridge on the mean objective; keeps STLSQ and debiasing solves well posed.
  double ridge = 1e-10;
  double nu = 1e-2;
  int max_iter = 100;
  double tol = 1e-8;
  ThresholdKind prox = ThresholdKind::hard;
  // Least-squares re-fit on the SR3 support.
  bool debias = true;
};

void to_json(nlohmann::json& j, const SparseSolverConfig& c);
void from_json(const nlohmann::json& j, SparseSolverConfig& c);

class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normal equations of the mean objective (1/N) sum_i ||W xi_i - y_i||^2.
/// Coefficients are stored p x d internally (one column per output).
struct NormalEquations {
  Matrix gram;   // Theta^T Theta / N
  Matrix cross;  // Theta^T Y / N
  Vector y_sq;   // (1/N) sum_i y_ik^2
  Eigen::Index n_rows = 0;

  Eigen::Index features() const { return gram.rows(); }
  Eigen::Index outputs() const { return cross.cols(); }

  static NormalEquations from_design(const Matrix& Theta, const Matrix& Y);

  /// Mean squared residual (summed over outputs) of W (d x p).
  double mean_loss(const Matrix& W) const;
};

struct SparseFit {
  Matrix W;  // d x p
  int iterations = 0;
  bool converged = false;
  // Every coefficient was thresholded away; W is zero.
  bool all_zero = false;
  // SR3 relaxed objective: initial value, then one entry per iteration.
  std::vector<double> objective;
};

/// argmin ||Theta W^T - Y||^2 + ridge ||W||^2 through the normal equations.
/// Throws RankDeficientError when the normal matrix is numerically singular.
Matrix least_squares(const Matrix& Theta, const Matrix& Y, double ridge);

SparseFit stlsq(const NormalEquations& ne, const SparseSolverConfig& cfg);
SparseFit sr3(const NormalEquations& ne, const SparseSolverConfig& cfg);
SparseFit solve_sparse(const NormalEquations& ne, const SparseSolverConfig& cfg);

inline SparseFit stlsq(const Matrix& Theta, const Matrix& Y, const SparseSolverConfig& cfg) {
  return stlsq(NormalEquations::from_design(Theta, Y), cfg);
}
inline SparseFit sr3(const Matrix& Theta, const Matrix& Y, const SparseSolverConfig& cfg) {
  return sr3(NormalEquations::from_design(Theta, Y), cfg);
}

/// Ridge solve restricted to `support` for one output column; zeros elsewhere.
Vector solve_on_support(const NormalEquations& ne, Eigen::Index output,
                        const std::vector<Eigen::Index>& support, double ridge);

int count_active(const Matrix& W, double zero_tol);

}  // namespace bridgekit
