#include "bridgekit/dynamics.hpp"

#include <cmath>

#include <omp.h>

namespace bridgekit {

namespace {

void check_finite(std::span<const double> x, int step) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw IntegrationError("non-finite state at step " + std::to_string(step), step);
    }
  }
}

void validate(const IntegratorConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("integrator: steps must be >= 1");
  if (!(cfg.t_end > cfg.t_start)) throw std::invalid_argument("integrator: t_end must exceed t_start");
}

std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> cspan_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double em_time(TimeDirection dir, int k, double dt) {
  return dir == TimeDirection::forward ? k * dt : 1.0 - k * dt;
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

std::string_view to_string(IntegratorMethod m) { return m == IntegratorMethod::euler ? "euler" : "rk4"; }

IntegratorMethod parse_integrator(std::string_view name) {
  if (name == "euler") return IntegratorMethod::euler;
  if (name == "rk4") return IntegratorMethod::rk4;
  throw std::invalid_argument("unknown integrator: " + std::string(name));
}

void to_json(nlohmann::json& j, const IntegratorConfig& c) {
  j = nlohmann::json{{"method", std::string(to_string(c.method))},
                     {"steps", c.steps},
                     {"t_start", c.t_start},
                     {"t_end", c.t_end}};
}

void from_json(const nlohmann::json& j, IntegratorConfig& c) {
  c = IntegratorConfig{};
  if (j.contains("method")) c.method = parse_integrator(j.at("method").get<std::string>());
  c.steps = j.value("steps", c.steps);
  c.t_start = j.value("t_start", c.t_start);
  c.t_end = j.value("t_end", c.t_end);
  validate(c);
}

void OdeWorkspace::resize(Eigen::Index d) {
  if (k1.size() == d) return;
  k1.resize(d);
  k2.resize(d);
  k3.resize(d);
  k4.resize(d);
  stage.resize(d);
}

void integrate_ode(const DriftFn& drift, std::span<double> x, const IntegratorConfig& cfg,
                   OdeWorkspace& ws) {
  validate(cfg);
  const auto d = static_cast<Eigen::Index>(x.size());
  ws.resize(d);
  const double h = (cfg.t_end - cfg.t_start) / cfg.steps;
  auto X = as_vector(x);

  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.t_start + k * h;
    if (cfg.method == IntegratorMethod::euler) {
      drift(x, t, span_of(ws.k1));
      for (Eigen::Index j = 0; j < d; ++j) X(j) += h * ws.k1(j);
    } else {
      drift(x, t, span_of(ws.k1));
      ws.stage = X + 0.5 * h * ws.k1;
      drift(cspan_of(ws.stage), t + 0.5 * h, span_of(ws.k2));
      ws.stage = X + 0.5 * h * ws.k2;
      drift(cspan_of(ws.stage), t + 0.5 * h, span_of(ws.k3));
      ws.stage = X + h * ws.k3;
      drift(cspan_of(ws.stage), t + h, span_of(ws.k4));
      X += (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
    }
    check_finite(x, k);
  }
}

Vector integrate_ode(const DriftFn& drift, const Vector& x0, const IntegratorConfig& cfg) {
  Vector x = x0;
  OdeWorkspace ws;
  integrate_ode(drift, span_of(x), cfg, ws);
  return x;
}

Samples transport_samples(const DriftFn& drift, const Samples& X0, const IntegratorConfig& cfg) {
  validate(cfg);
  Samples X = X0;
  const Eigen::Index n = X.rows();
  // Exceptions cannot leave an OpenMP region; the first failure is rethrown after it.
  std::exception_ptr failure;
#pragma omp parallel
  {
    OdeWorkspace ws;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      try {
        integrate_ode(drift, row_span(X, i), cfg, ws);
      } catch (...) {
#pragma omp critical(bridgekit_transport_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return X;
}

namespace reference {

Samples transport_samples(const DriftFn& drift, const Samples& X0, const IntegratorConfig& cfg) {
  Samples X = X0;
  OdeWorkspace ws;
  for (Eigen::Index i = 0; i < X.rows(); ++i) integrate_ode(drift, row_span(X, i), cfg, ws);
  return X;
}

}  // namespace reference

Samples euler_maruyama_path(const DriftFn& drift, double sigma, const Vector& x0, int steps,
                            Rng& rng, TimeDirection direction) {
  if (sigma < 0) throw std::invalid_argument("euler_maruyama: sigma must be >= 0");
  if (steps < 1) throw std::invalid_argument("euler_maruyama: steps must be >= 1");
  const Eigen::Index d = x0.size();
  const double dt = 1.0 / steps;
  const double noise_scale = sigma * std::sqrt(dt);
  std::normal_distribution<double> normal;

  Samples path(steps + 1, d);
  path.row(0) = x0.transpose();
  Vector x = x0;
  Vector v(d);
  for (int k = 0; k < steps; ++k) {
    drift(cspan_of(x), em_time(direction, k, dt), span_of(v));
    for (Eigen::Index j = 0; j < d; ++j) x(j) += v(j) * dt + noise_scale * normal(rng);
    check_finite(cspan_of(x), k);
    path.row(k + 1) = x.transpose();
  }
  return path;
}

Vector euler_maruyama(const DriftFn& drift, double sigma, const Vector& x0, int steps, Rng& rng,
                      TimeDirection direction) {
  if (sigma < 0) throw std::invalid_argument("euler_maruyama: sigma must be >= 0");
  if (steps < 1) throw std::invalid_argument("euler_maruyama: steps must be >= 1");
  const Eigen::Index d = x0.size();
  const double dt = 1.0 / steps;
  const double noise_scale = sigma * std::sqrt(dt);
  std::normal_distribution<double> normal;

  Vector x = x0;
  Vector v(d);
  for (int k = 0; k < steps; ++k) {
    drift(cspan_of(x), em_time(direction, k, dt), span_of(v));
    for (Eigen::Index j = 0; j < d; ++j) x(j) += v(j) * dt + noise_scale * normal(rng);
    check_finite(cspan_of(x), k);
  }
  return x;
}

Samples euler_maruyama_batch(const BatchDriftFn& drift, double sigma, const Samples& X0, int steps,
                             Rng& rng, TimeDirection direction) {
  if (sigma < 0) throw std::invalid_argument("euler_maruyama: sigma must be >= 0");
  if (steps < 1) throw std::invalid_argument("euler_maruyama: steps must be >= 1");
  const double dt = 1.0 / steps;
  const double noise_scale = sigma * std::sqrt(dt);
  std::normal_distribution<double> normal;

  Samples X = X0;
  Samples V(X.rows(), X.cols());
  for (int k = 0; k < steps; ++k) {
    drift(X, em_time(direction, k, dt), V);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index j = 0; j < X.cols(); ++j)
        X(i, j) += V(i, j) * dt + noise_scale * normal(rng);
    if (!X.allFinite()) {
      throw IntegrationError("non-finite state at step " + std::to_string(k), k);
    }
  }
  return X;
}

}  // namespace bridgekit
