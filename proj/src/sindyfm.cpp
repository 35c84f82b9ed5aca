#include "bridgekit/sindyfm.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <vector>

namespace bridgekit {

namespace {

constexpr Eigen::Index kBlockRows = 4096;

void check_dataset_args(const Interpolant& interpolant, int N, int m) {
  if (N < 1 || m < 1) throw std::invalid_argument("build_dataset: N and m must be >= 1");
  if (interpolant.kind != InterpolantKind::linear) {
    throw std::invalid_argument("build_dataset: only the linear interpolant has an exact derivative");
  }
}

FMDataset allocate_dataset(int dim, int N, int m) {
  const Eigen::Index rows = static_cast<Eigen::Index>(N) * m;
  FMDataset ds;
  ds.X.resize(rows, dim);
  ds.T.resize(rows);
  ds.Xdot.resize(rows, dim);
  ds.X0.resize(N, dim);
  ds.X1.resize(N, dim);
  ds.n_trajectories = N;
  ds.points_per_traj = m;
  return ds;
}

// Everything trajectory i contributes: endpoints, m sorted times, m rows.
void fill_trajectory(const EndpointSampler& endpoints, int i, int m, std::uint64_t seed,
                     std::vector<double>& times, FMDataset& ds) {
  Rng rng = derive_stream(seed, static_cast<std::uint64_t>(i));
  endpoints.sample_pair(rng, row_span(ds.X0, i), row_span(ds.X1, i));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  times.resize(m);
  for (int j = 0; j < m; ++j) times[j] = unif(rng);
  std::sort(times.begin(), times.end());
  for (int j = 0; j < m; ++j) {
    const Eigen::Index r = static_cast<Eigen::Index>(i) * m + j;
    ds.T(r) = times[j];
    linear_path(times[j], row_span(std::as_const(ds.X0), i), row_span(std::as_const(ds.X1), i),
                row_span(ds.X, r), row_span(ds.Xdot, r));
  }
}

void check_fit_args(const FMDataset& ds, const FeatureLibrary& lib) {
  if (ds.rows() < 1) throw std::invalid_argument("fit: dataset is empty");
  if (lib.dim() != ds.dim()) throw DimensionError("fit: library dimension does not match dataset");
}

// Gram, cross and y^2 sums (not yet divided by N) of rows [begin, end).
struct BlockSums {
  Matrix gram;
  Matrix cross;
  Vector y_sq;
};

BlockSums block_sums(const FMDataset& ds, const FeatureLibrary& lib, Eigen::Index begin,
                     Eigen::Index end) {
  const Eigen::Index p = lib.feature_count();
  const Eigen::Index rows = end - begin;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> theta(rows, p);
  for (Eigen::Index r = 0; r < rows; ++r) {
    lib.eval(row_span(ds.X, begin + r), ds.T(begin + r),
             {theta.data() + r * p, static_cast<std::size_t>(p)});
  }
  const auto y = ds.Xdot.middleRows(begin, rows);
  BlockSums s;
  s.gram = Matrix::Zero(p, p);
  s.gram.selfadjointView<Eigen::Lower>().rankUpdate(theta.transpose());
  s.gram = s.gram.selfadjointView<Eigen::Lower>();
  s.cross = theta.transpose() * y;
  s.y_sq = y.colwise().squaredNorm().transpose();
  return s;
}

template <typename Fn>
double seconds_of(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

FMDataset build_dataset(const EndpointSampler& endpoints, const Interpolant& interpolant, int N,
                        int m, std::uint64_t seed) {
  check_dataset_args(interpolant, N, m);
  FMDataset ds = allocate_dataset(endpoints.dim(), N, m);
  std::exception_ptr failure;
#pragma omp parallel
  {
    std::vector<double> times;
#pragma omp for schedule(static)
    for (int i = 0; i < N; ++i) {
      try {
        fill_trajectory(endpoints, i, m, seed, times, ds);
      } catch (...) {
#pragma omp critical(bridgekit_dataset_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return ds;
}

NormalEquations accumulate_normal_equations(const FMDataset& ds, const FeatureLibrary& lib) {
  check_fit_args(ds, lib);
  const Eigen::Index n = ds.rows();
  const Eigen::Index blocks = (n + kBlockRows - 1) / kBlockRows;
  std::vector<BlockSums> partial(blocks);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    partial[b] = block_sums(ds, lib, b * kBlockRows, std::min(n, (b + 1) * kBlockRows));
  }
  NormalEquations ne;
  ne.n_rows = n;
  ne.gram = std::move(partial[0].gram);
  ne.cross = std::move(partial[0].cross);
  ne.y_sq = std::move(partial[0].y_sq);
  for (Eigen::Index b = 1; b < blocks; ++b) {
    ne.gram += partial[b].gram;
    ne.cross += partial[b].cross;
    ne.y_sq += partial[b].y_sq;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  ne.gram *= inv_n;
  ne.cross *= inv_n;
  ne.y_sq *= inv_n;
  return ne;
}

Matrix design_matrix(const FMDataset& ds, const FeatureLibrary& lib) {
  check_fit_args(ds, lib);
  Matrix theta(ds.rows(), lib.feature_count());
  Vector row(lib.feature_count());
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    lib.eval(row_span(ds.X, r), ds.T(r), {row.data(), static_cast<std::size_t>(row.size())});
    theta.row(r) = row.transpose();
  }
  return theta;
}

namespace reference {

FMDataset build_dataset(const EndpointSampler& endpoints, const Interpolant& interpolant, int N,
                        int m, std::uint64_t seed) {
  check_dataset_args(interpolant, N, m);
  FMDataset ds = allocate_dataset(endpoints.dim(), N, m);
  std::vector<double> times;
  for (int i = 0; i < N; ++i) fill_trajectory(endpoints, i, m, seed, times, ds);
  return ds;
}

NormalEquations accumulate_normal_equations(const FMDataset& ds, const FeatureLibrary& lib) {
  return NormalEquations::from_design(design_matrix(ds, lib), Matrix(ds.Xdot));
}

}  // namespace reference

void SymbolicDrift::evaluate(std::span<const double> x, double t, std::span<double> out) const {
  thread_local std::vector<double> xi;
  xi.resize(static_cast<std::size_t>(W.cols()));
  library.eval(x, t, xi);
  as_vector(out).noalias() = W * Eigen::Map<const Vector>(xi.data(), W.cols());
}

Vector SymbolicDrift::operator()(const Vector& x, double t) const {
  Vector out(W.rows());
  evaluate({x.data(), static_cast<std::size_t>(x.size())}, t,
           {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

DriftFn SymbolicDrift::as_drift() const {
  // Holds its own copy so the callable outlives the model it came from.
  return [model = SymbolicDrift{library, W, {}}](std::span<const double> x, double t, std::span<double> out) {
    model.evaluate(x, t, out);
  };
}

double training_loss(const SymbolicDrift& model, const FMDataset& ds) {
  const Eigen::Index n = ds.rows();
  const Eigen::Index blocks = (n + kBlockRows - 1) / kBlockRows;
  std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    Vector v(model.W.rows());
    double acc = 0.0;
    for (Eigen::Index r = b * kBlockRows; r < std::min(n, (b + 1) * kBlockRows); ++r) {
      model.evaluate(row_span(ds.X, r), ds.T(r), {v.data(), static_cast<std::size_t>(v.size())});
      acc += (v - ds.Xdot.row(r).transpose()).squaredNorm();
    }
    partial[b] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(n);
}

SymbolicDrift fit(const FMDataset& ds, const FeatureLibrary& lib, const SparseSolverConfig& cfg,
                  const FitOptions& options) {
  check_fit_args(ds, lib);
  SymbolicDrift model;
  model.library = lib;
  SparseFit result;

  model.fit_meta.train_seconds = seconds_of([&] {
    NormalEquations ne = accumulate_normal_equations(ds, lib);
    Vector scale = Vector::Ones(ne.features());
    if (options.normalize_columns) {
      scale = ne.gram.diagonal().cwiseSqrt();
      for (Eigen::Index j = 0; j < scale.size(); ++j)
        if (!(scale(j) > 0)) scale(j) = 1.0;
      const Vector inv = scale.cwiseInverse();
      ne.gram = inv.asDiagonal() * ne.gram * inv.asDiagonal();
      ne.cross = inv.asDiagonal() * ne.cross;
    }
    result = solve_sparse(ne, cfg);
    model.W = result.W * scale.cwiseInverse().asDiagonal();
  });

  FitMeta& meta = model.fit_meta;
  meta.solver = cfg;
  meta.training_loss = training_loss(model, ds);
  meta.active_count = count_active(model.W, options.zero_tol);
  meta.iterations = result.iterations;
  meta.converged = result.converged;
  meta.all_zero = result.all_zero;
  meta.normalize_columns = options.normalize_columns;
  return model;
}

void to_json(nlohmann::json& j, const FitMeta& m) {
  j = nlohmann::json{{"solver", m.solver},
                     {"training_loss", m.training_loss},
                     {"active_count", m.active_count},
                     {"train_seconds", m.train_seconds},
                     {"iterations", m.iterations},
                     {"converged", m.converged},
                     {"all_zero", m.all_zero},
                     {"normalize_columns", m.normalize_columns},
                     {"source", m.source}};
}

void from_json(const nlohmann::json& j, FitMeta& m) {
  m = FitMeta{};
  if (j.contains("solver")) m.solver = j.at("solver").get<SparseSolverConfig>();
  m.training_loss = j.value("training_loss", 0.0);
  m.active_count = j.value("active_count", 0);
  m.train_seconds = j.value("train_seconds", 0.0);
  m.iterations = j.value("iterations", 0);
  m.converged = j.value("converged", false);
  m.all_zero = j.value("all_zero", false);
  m.normalize_columns = j.value("normalize_columns", false);
  if (j.contains("source")) m.source = j.at("source");
}

nlohmann::json serialize(const SymbolicDrift& model) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.W.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < model.W.cols(); ++k) row.push_back(model.W(i, k));
    rows.push_back(std::move(row));
  }
  return {{"library", model.library}, {"W", std::move(rows)}, {"fit_meta", model.fit_meta}};
}

SymbolicDrift deserialize(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("library") || !doc.contains("W")) {
    throw std::invalid_argument("model JSON: expected {library, W, fit_meta}");
  }
  SymbolicDrift model;
  model.library = doc.at("library").get<FeatureLibrary>();
  const auto& rows = doc.at("W");
  const int d = model.library.dim();
  const int p = model.library.feature_count();
  if (!rows.is_array() || static_cast<int>(rows.size()) != d) {
    throw DimensionError("model JSON: W must have " + std::to_string(d) + " rows");
  }
  model.W.resize(d, p);
  for (int i = 0; i < d; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || static_cast<int>(row.size()) != p) {
      throw DimensionError("model JSON: W row " + std::to_string(i) + " must have " +
                           std::to_string(p) + " coefficients");
    }
    for (int k = 0; k < p; ++k) model.W(i, k) = row[k].get<double>();
  }
  if (doc.contains("fit_meta")) model.fit_meta = doc.at("fit_meta").get<FitMeta>();
  return model;
}

}  // namespace bridgekit
