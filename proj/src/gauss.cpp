#include "bridgekit/gauss.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace bridgekit {

namespace {

constexpr std::array<std::pair<Scenario, std::string_view>, 5> kScenarioNames{{
    {Scenario::identity, "identity"},
    {Scenario::diagonal, "diagonal"},
    {Scenario::rotated, "rotated"},
    {Scenario::high_condition, "high_condition"},
    {Scenario::asymmetric, "asymmetric"},
}};

Vector log_uniform_spectrum(int dim, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  Vector lam(dim);
  for (int i = 0; i < dim; ++i) lam(i) = std::exp(u(rng));
  return lam;
}

Matrix conjugate(const Matrix& Q, const Vector& lam) {
  Matrix S = Q * lam.asDiagonal() * Q.transpose();
  return 0.5 * (S + S.transpose());
}

// Stretch the spectrum so lambda_max / lambda_min >= cond: the largest stays at
// hi and the smallest is pinned to min(lo, hi / cond).
Vector pinned_spectrum(int dim, double lo, double hi, double cond, Rng& rng) {
  Vector lam = log_uniform_spectrum(dim, lo, hi, rng);
  if (dim < 2) return lam;
  Eigen::Index imin = 0, imax = 0;
  lam.minCoeff(&imin);
  lam.maxCoeff(&imax);
  if (imin == imax) imax = (imin + 1) % dim;
  lam(imax) = hi;
  lam(imin) = std::min(lo, hi / cond);
  return lam;
}

bool is_symmetric(const Matrix& A, double tol) {
  if (A.rows() != A.cols()) return false;
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  return (A - A.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace

std::string_view to_string(Scenario s) {
  for (const auto& [value, name] : kScenarioNames) {
    if (value == s) return name;
  }
  return "unknown";
}

Scenario parse_scenario(std::string_view name) {
  for (const auto& [value, label] : kScenarioNames) {
    if (label == name) return value;
  }
  throw std::invalid_argument("unknown scenario label: " + std::string(name));
}

std::pair<double, double> default_spectrum_range(Scenario name) {
  return name == Scenario::high_condition ? std::pair{0.01, 1.0} : std::pair{0.3, 3.0};
}

Matrix random_orthogonal(int dim, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix A(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) A(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix Q = qr.householderQ();
  const Matrix& R = qr.matrixQR();
  for (int j = 0; j < dim; ++j) {
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  }
  return Q;
}

GaussianPair make_scenario(Scenario name, int dim, double mean_scale,
                           std::pair<double, double> spectrum_range, std::uint64_t seed,
                           double condition_number, double asymmetry_scale) {
  const auto [lo, hi] = spectrum_range;
  if (dim < 1) throw std::invalid_argument("make_scenario: dim must be >= 1");
  if (!(lo > 0.0) || !(hi > 0.0)) {
    throw std::invalid_argument("make_scenario: spectrum bounds must be positive");
  }
  if (!(lo < hi)) throw std::invalid_argument("make_scenario: spectrum_lo must be < spectrum_hi");
  if (!(condition_number >= 1.0)) {
    throw std::invalid_argument("make_scenario: condition_number must be >= 1");
  }
  if (!(asymmetry_scale > 0.0)) {
    throw std::invalid_argument("make_scenario: asymmetry_scale must be positive");
  }

  Rng rng(seed);
  GaussianPair p;
  p.dim = dim;
  p.scenario_name = std::string(to_string(name));
  p.seed = seed;
  p.mu0 = Vector::Constant(dim, mean_scale / std::sqrt(static_cast<double>(dim)));
  p.mu1 = -p.mu0;

  switch (name) {
    case Scenario::identity:
      p.sigma0 = Matrix::Identity(dim, dim);
      p.sigma1 = Matrix::Identity(dim, dim);
      break;
    case Scenario::diagonal:
      p.sigma0 = log_uniform_spectrum(dim, lo, hi, rng).asDiagonal();
      p.sigma1 = log_uniform_spectrum(dim, lo, hi, rng).asDiagonal();
      break;
    case Scenario::rotated: {
      const Vector l0 = log_uniform_spectrum(dim, lo, hi, rng);
      const Vector l1 = log_uniform_spectrum(dim, lo, hi, rng);
      p.sigma0 = conjugate(random_orthogonal(dim, rng), l0);
      p.sigma1 = conjugate(random_orthogonal(dim, rng), l1);
      break;
    }
    case Scenario::high_condition:
      p.sigma0 = pinned_spectrum(dim, lo, hi, condition_number, rng).asDiagonal();
      p.sigma1 = pinned_spectrum(dim, lo, hi, condition_number, rng).asDiagonal();
      break;
    case Scenario::asymmetric: {
      const Vector l0 = log_uniform_spectrum(dim, lo, hi, rng);
      const Vector l1 =
          log_uniform_spectrum(dim, lo * asymmetry_scale, hi * asymmetry_scale, rng);
      p.sigma0 = conjugate(random_orthogonal(dim, rng), l0);
      p.sigma1 = conjugate(random_orthogonal(dim, rng), l1);
      break;
    }
  }
  return p;
}

GaussianPair make_scenario(const ScenarioSpec& spec) {
  const Scenario name = parse_scenario(spec.name);
  auto range = default_spectrum_range(name);
  if (spec.spectrum_lo) range.first = *spec.spectrum_lo;
  if (spec.spectrum_hi) range.second = *spec.spectrum_hi;
  return make_scenario(name, spec.dim, spec.mean_scale, range, spec.seed, spec.condition_number,
                       spec.asymmetry_scale);
}

Samples sample_gaussian(const Vector& mean, const Matrix& cov, Eigen::Index n, Rng& rng) {
  const Eigen::Index dim = mean.size();
  if (cov.rows() != dim || cov.cols() != dim) {
    throw DimensionError("sample: covariance shape does not match mean");
  }
  if (n < 0) throw std::invalid_argument("sample: n must be >= 0");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("sample: Cholesky factorization failed (covariance not positive definite)");
  }
  const Matrix L = llt.matrixL();

  std::normal_distribution<double> normal;
  Samples Z(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) Z(i, j) = normal(rng);
  Samples X = Z * L.transpose();
  X.rowwise() += mean.transpose();
  return X;
}

Samples sample(const GaussianPair& pair, Side side, Eigen::Index n, Rng& rng) {
  return sample_gaussian(pair.mean(side), pair.cov(side), n, rng);
}

Moments empirical_moments(const Samples& X) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw std::invalid_argument("empirical_moments: need at least 2 rows");
  Moments m;
  m.mean = X.colwise().mean().transpose();
  const Samples centered = X.rowwise() - m.mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  m.cov = 0.5 * (cov + cov.transpose());
  return m;
}

Matrix psd_sqrt(const Matrix& A) {
  if (!is_symmetric(A, 1e-8)) {
    throw std::invalid_argument("psd_sqrt: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("psd_sqrt: eigendecomposition failed");
  }
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Matrix S = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (S + S.transpose());
}

double bures_w2(const Vector& mu_a, const Matrix& cov_a, const Vector& mu_b, const Matrix& cov_b) {
  const Eigen::Index d = mu_a.size();
  if (mu_b.size() != d || cov_a.rows() != d || cov_b.rows() != d || cov_a.cols() != d ||
      cov_b.cols() != d) {
    throw DimensionError("bures_w2: shape mismatch");
  }
  const Matrix root_a = psd_sqrt(cov_a);
  const Matrix root_b = psd_sqrt(cov_b);
  // Covariance term as min_U ||A^1/2 - B^1/2 U||_F^2 with U the polar factor of
  // B^1/2' A^1/2. Same value as tr A + tr B - 2 tr (A^1/2 B A^1/2)^1/2 without the
  // cancellation, so identical inputs give zero to rounding.
  Eigen::JacobiSVD<Matrix> svd(root_b.transpose() * root_a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix U = svd.matrixU() * svd.matrixV().transpose();
  const double w2sq = (mu_a - mu_b).squaredNorm() + (root_a - root_b * U).squaredNorm();
  return std::sqrt(std::max(0.0, w2sq));
}

double gaussian_fit_w2(const Samples& X, const Vector& mean, const Matrix& cov) {
  const Moments m = empirical_moments(X);
  return bures_w2(m.mean, m.cov, mean, cov);
}

namespace {

nlohmann::json matrix_rows(const Matrix& A) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_rows(const nlohmann::json& rows, Eigen::Index d) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != d) {
    throw DimensionError("GaussianPair JSON: covariance must have dim rows");
  }
  Matrix A(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
      throw DimensionError("GaussianPair JSON: covariance row has wrong length");
    }
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = row[j].get<double>();
  }
  return A;
}

Vector vector_from_json(const nlohmann::json& v, Eigen::Index d) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != d) {
    throw DimensionError("GaussianPair JSON: mean must have dim entries");
  }
  Vector out(d);
  for (Eigen::Index i = 0; i < d; ++i) out(i) = v[i].get<double>();
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const GaussianPair& p) {
  j = nlohmann::json{{"dim", p.dim},
                     {"scenario", p.scenario_name},
                     {"seed", p.seed},
                     {"mu0", std::vector<double>(p.mu0.data(), p.mu0.data() + p.mu0.size())},
                     {"sigma0", matrix_rows(p.sigma0)},
                     {"mu1", std::vector<double>(p.mu1.data(), p.mu1.data() + p.mu1.size())},
                     {"sigma1", matrix_rows(p.sigma1)}};
}

void from_json(const nlohmann::json& j, GaussianPair& p) {
  p.dim = j.at("dim").get<int>();
  if (p.dim < 1) throw DimensionError("GaussianPair JSON: dim must be >= 1");
  p.scenario_name = j.value("scenario", std::string{});
  p.seed = j.value("seed", std::uint64_t{0});
  p.mu0 = vector_from_json(j.at("mu0"), p.dim);
  p.mu1 = vector_from_json(j.at("mu1"), p.dim);
  p.sigma0 = matrix_from_rows(j.at("sigma0"), p.dim);
  p.sigma1 = matrix_from_rows(j.at("sigma1"), p.dim);
}

void to_json(nlohmann::json& j, const ScenarioSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"dim", s.dim},
                     {"mean_scale", s.mean_scale},
                     {"seed", s.seed},
                     {"condition_number", s.condition_number},
                     {"asymmetry_scale", s.asymmetry_scale}};
  if (s.spectrum_lo) j["spectrum_lo"] = *s.spectrum_lo;
  if (s.spectrum_hi) j["spectrum_hi"] = *s.spectrum_hi;
}

void from_json(const nlohmann::json& j, ScenarioSpec& s) {
  s = ScenarioSpec{};
  s.name = j.value("name", s.name);
  s.dim = j.value("dim", s.dim);
  s.mean_scale = j.value("mean_scale", s.mean_scale);
  s.seed = j.value("seed", s.seed);
  s.condition_number = j.value("condition_number", s.condition_number);
  s.asymmetry_scale = j.value("asymmetry_scale", s.asymmetry_scale);
  if (j.contains("spectrum_lo")) s.spectrum_lo = j.at("spectrum_lo").get<double>();
  if (j.contains("spectrum_hi")) s.spectrum_hi = j.at("spectrum_hi").get<double>();
}

}  // namespace bridgekit
