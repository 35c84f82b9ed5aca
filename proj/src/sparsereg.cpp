#include "bridgekit/sparsereg.hpp"

#include <cmath>

namespace bridgekit {

namespace {

// Pivots of a Cholesky factor below this fraction of the largest one mean the
// normal matrix is singular to working precision.
constexpr double kPivotRatio = 1e-14;

Eigen::LLT<Matrix> factor_spd(const Matrix& A, const char* who) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success) {
    throw RankDeficientError(std::string(who) + ": normal matrix is singular (set ridge > 0)");
  }
  const Vector piv = llt.matrixLLT().diagonal().cwiseAbs2();
  if (piv.size() > 0 && piv.minCoeff() <= kPivotRatio * piv.maxCoeff()) {
    throw RankDeficientError(std::string(who) + ": normal matrix is rank deficient (set ridge > 0)");
  }
  return llt;
}

double prox_scalar(double w, double threshold, ThresholdKind kind) {
  if (kind == ThresholdKind::hard) return std::abs(w) >= threshold ? w : 0.0;
  const double m = std::abs(w) - threshold;
  return m > 0.0 ? std::copysign(m, w) : 0.0;
}

// Relaxed SR3 objective with the penalty weight chosen so the prox thresholds
// exactly at cfg.threshold: hard uses lambda = thr^2 / (2 nu), soft lambda = thr / nu.
double sr3_objective(const NormalEquations& ne, const Matrix& C, const Matrix& V,
                     const SparseSolverConfig& cfg) {
  const double fit = 0.5 * ne.mean_loss(C.transpose());
  double penalty = 0.0;
  if (cfg.prox == ThresholdKind::hard) {
    const double lambda = cfg.threshold * cfg.threshold / (2.0 * cfg.nu);
    penalty = lambda * static_cast<double>((V.array() != 0.0).count());
  } else {
    penalty = cfg.threshold / cfg.nu * V.cwiseAbs().sum();
  }
  return fit + penalty + (C - V).squaredNorm() / (2.0 * cfg.nu);
}

std::vector<Eigen::Index> support_of(const Matrix& C, Eigen::Index col) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index j = 0; j < C.rows(); ++j) {
    if (C(j, col) != 0.0) s.push_back(j);
  }
  return s;
}

Matrix ridge_solution(const NormalEquations& ne, double ridge, const char* who) {
  const Eigen::Index p = ne.features();
  const Matrix A = ne.gram + ridge * Matrix::Identity(p, p);
  return factor_spd(A, who).solve(ne.cross);
}

}  // namespace

std::string_view to_string(SparseMethod m) { return m == SparseMethod::stlsq ? "stlsq" : "sr3"; }

SparseMethod parse_sparse_method(std::string_view name) {
  if (name == "stlsq") return SparseMethod::stlsq;
  if (name == "sr3") return SparseMethod::sr3;
  throw std::invalid_argument("unknown sparse method: " + std::string(name));
}

NormalEquations NormalEquations::from_design(const Matrix& Theta, const Matrix& Y) {
  if (Theta.rows() != Y.rows()) throw DimensionError("normal equations: row count mismatch");
  if (Theta.rows() < 1) throw std::invalid_argument("normal equations: need at least one row");
  if (Theta.hasNaN() || Y.hasNaN()) throw std::invalid_argument("normal equations: NaN in data");
  NormalEquations ne;
  const double inv_n = 1.0 / static_cast<double>(Theta.rows());
  ne.n_rows = Theta.rows();
  ne.gram = Theta.transpose() * Theta * inv_n;
  ne.cross = Theta.transpose() * Y * inv_n;
  ne.y_sq = Y.colwise().squaredNorm().transpose() * inv_n;
  return ne;
}

double NormalEquations::mean_loss(const Matrix& W) const {
  double loss = y_sq.sum();
  for (Eigen::Index k = 0; k < W.rows(); ++k) {
    const Vector w = W.row(k).transpose();
    loss += w.dot(gram * w) - 2.0 * w.dot(cross.col(k));
  }
  return loss;
}

Matrix least_squares(const Matrix& Theta, const Matrix& Y, double ridge) {
  if (Theta.rows() != Y.rows()) throw DimensionError("least_squares: row count mismatch");
  if (Theta.rows() < 1) throw std::invalid_argument("least_squares: need at least one row");
  if (Theta.hasNaN() || Y.hasNaN()) throw std::invalid_argument("least_squares: NaN in data");
  if (ridge < 0) throw std::invalid_argument("least_squares: ridge must be >= 0");
  const Eigen::Index p = Theta.cols();
  const Matrix A = Theta.transpose() * Theta + ridge * Matrix::Identity(p, p);
  const Matrix B = Theta.transpose() * Y;
  return factor_spd(A, "least_squares").solve(B).transpose();
}

Vector solve_on_support(const NormalEquations& ne, Eigen::Index output,
                        const std::vector<Eigen::Index>& support, double ridge) {
  Vector c = Vector::Zero(ne.features());
  const auto s = static_cast<Eigen::Index>(support.size());
  if (s == 0) return c;
  Matrix A(s, s);
  Vector b(s);
  for (Eigen::Index a = 0; a < s; ++a) {
    b(a) = ne.cross(support[a], output);
    for (Eigen::Index q = 0; q < s; ++q) A(a, q) = ne.gram(support[a], support[q]);
  }
  A.diagonal().array() += ridge;
  const Vector sol = factor_spd(A, "support refit").solve(b);
  for (Eigen::Index a = 0; a < s; ++a) c(support[a]) = sol(a);
  return c;
}

SparseFit stlsq(const NormalEquations& ne, const SparseSolverConfig& cfg) {
  if (!(cfg.threshold > 0)) throw std::invalid_argument("stlsq: threshold must be > 0");
  const Eigen::Index p = ne.features();
  const Eigen::Index d = ne.outputs();

  Matrix C = ridge_solution(ne, cfg.ridge, "stlsq");
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(p, d, true);

  SparseFit out;
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> next =
        C.array().abs() >= cfg.threshold;
    out.iterations = it + 1;
    if ((next == active).all()) {
      out.converged = true;
      break;
    }
    active = next;
    for (Eigen::Index k = 0; k < d; ++k) {
      std::vector<Eigen::Index> support;
      for (Eigen::Index j = 0; j < p; ++j)
        if (active(j, k)) support.push_back(j);
      C.col(k) = solve_on_support(ne, k, support, cfg.ridge);
    }
  }
  // Anything outside the final active set is exactly zero.
  C = active.select(C, 0.0);
  out.all_zero = !active.any();
  out.W = C.transpose();
  return out;
}

SparseFit sr3(const NormalEquations& ne, const SparseSolverConfig& cfg) {
  if (!(cfg.nu > 0)) throw std::invalid_argument("sr3: nu must be > 0");
  if (!(cfg.threshold >= 0)) throw std::invalid_argument("sr3: threshold must be >= 0");
  const Eigen::Index p = ne.features();
  const Eigen::Index d = ne.outputs();

  Matrix C = ridge_solution(ne, cfg.ridge, "sr3");
  auto prox = [&](const Matrix& M) {
    return M.unaryExpr([&](double w) { return prox_scalar(w, cfg.threshold, cfg.prox); }).eval();
  };
  Matrix V = prox(C);

  const Matrix A = ne.gram + Matrix::Identity(p, p) / cfg.nu;
  const Eigen::LLT<Matrix> relaxed = factor_spd(A, "sr3");

  SparseFit out;
  out.objective.push_back(sr3_objective(ne, C, V, cfg));
  for (int it = 0; it < cfg.max_iter; ++it) {
    C = relaxed.solve(ne.cross + V / cfg.nu);
    Matrix V_next = prox(C);
    out.objective.push_back(sr3_objective(ne, C, V_next, cfg));
    out.iterations = it + 1;
    const double change = (V_next - V).cwiseAbs().maxCoeff();
    V = std::move(V_next);
    if (change < cfg.tol) {
      out.converged = true;
      break;
    }
  }

  if (cfg.debias) {
    for (Eigen::Index k = 0; k < d; ++k) {
      V.col(k) = solve_on_support(ne, k, support_of(V, k), cfg.ridge);
    }
  }
  out.all_zero = (V.array() == 0.0).all();
  out.W = V.transpose();
  return out;
}

SparseFit solve_sparse(const NormalEquations& ne, const SparseSolverConfig& cfg) {
  return cfg.method == SparseMethod::stlsq ? stlsq(ne, cfg) : sr3(ne, cfg);
}

int count_active(const Matrix& W, double zero_tol) {
  return static_cast<int>((W.array().abs() > zero_tol).count());
}

void to_json(nlohmann::json& j, const SparseSolverConfig& c) {
  j = nlohmann::json{{"method", std::string(to_string(c.method))},
                     {"threshold", c.threshold},
                     {"ridge", c.ridge},
                     {"nu", c.nu},
                     {"max_iter", c.max_iter},
                     {"tol", c.tol},
                     {"prox", c.prox == ThresholdKind::hard ? "hard" : "soft"},
                     {"debias", c.debias}};
}

void from_json(const nlohmann::json& j, SparseSolverConfig& c) {
  c = SparseSolverConfig{};
  if (j.contains("method")) c.method = parse_sparse_method(j.at("method").get<std::string>());
  c.threshold = j.value("threshold", c.threshold);
  c.ridge = j.value("ridge", c.ridge);
  c.nu = j.value("nu", c.nu);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.tol = j.value("tol", c.tol);
  c.debias = j.value("debias", c.debias);
  if (j.contains("prox")) {
    const auto prox = j.at("prox").get<std::string>();
    if (prox == "hard") {
      c.prox = ThresholdKind::hard;
    } else if (prox == "soft") {
      c.prox = ThresholdKind::soft;
    } else {
      throw std::invalid_argument("unknown prox kind: " + prox);
    }
  }
  if (!(c.threshold > 0)) throw std::invalid_argument("solver config: threshold must be > 0");
  if (!(c.nu > 0)) throw std::invalid_argument("solver config: nu must be > 0");
  if (c.ridge < 0) throw std::invalid_argument("solver config: ridge must be >= 0");
  if (c.max_iter < 1) throw std::invalid_argument("solver config: max_iter must be >= 1");
}

}  // namespace bridgekit
