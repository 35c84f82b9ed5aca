#pragma once

#include <functional>
#include <span>
#include <string_view>

#include "json.hpp"

#include "bridgekit/common.hpp"

namespace bridgekit {

/// Row-wise drift: writes v(x, t) into out. Must be reentrant; transport calls
/// it from several threads at once.
using DriftFn = std::function<void(std::span<const double> x, double t, std::span<double> out)>;

/// Batched drift: row i of out is v(X.row(i), t).
using BatchDriftFn = std::function<void(const Samples& X, double t, Samples& out)>;

enum class IntegratorMethod { euler, rk4 };

std::string_view to_string(IntegratorMethod m);
IntegratorMethod parse_integrator(std::string_view name);

struct IntegratorConfig {
  IntegratorMethod method = IntegratorMethod::euler;
  int steps = 20;
  double t_start = 0.0;
  double t_end = 1.0;
};

void to_json(nlohmann::json& j, const IntegratorConfig& c);
void from_json(const nlohmann::json& j, IntegratorConfig& c);

/// A non-finite state appeared; step is the 0-based index of the offending step.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Scratch buffers for one trajectory; reuse across calls to avoid allocation.
struct OdeWorkspace {
  Vector k1, k2, k3, k4, stage;
  void resize(Eigen::Index d);
};

/// Fixed-step explicit integration of dx/dt = v(x, t), x updated in place.
void integrate_ode(const DriftFn& drift, std::span<double> x, const IntegratorConfig& cfg,
                   OdeWorkspace& ws);
Vector integrate_ode(const DriftFn& drift, const Vector& x0, const IntegratorConfig& cfg);

/// integrate_ode on every row; rows are sharded across OpenMP threads.
Samples transport_samples(const DriftFn& drift, const Samples& X0, const IntegratorConfig& cfg);

enum class TimeDirection { forward, backward };

/// x_{k+1} = x_k + v(x_k, t_k) dt + sigma sqrt(dt) xi_k with dt = 1 / steps.
/// Forward runs t_k = k dt; backward runs t_k = 1 - k dt and expects a drift that
/// points backward in time.
Vector euler_maruyama(const DriftFn& drift, double sigma, const Vector& x0, int steps, Rng& rng,
                      TimeDirection direction = TimeDirection::forward);

/// Same recursion, keeping every state: (steps + 1) x dim.
Samples euler_maruyama_path(const DriftFn& drift, double sigma, const Vector& x0, int steps,
                            Rng& rng, TimeDirection direction = TimeDirection::forward);

/// Euler-Maruyama on a whole cloud at once (one batched drift call per step).
/// Noise is drawn row-major per step from the single stream rng.
Samples euler_maruyama_batch(const BatchDriftFn& drift, double sigma, const Samples& X0, int steps,
                             Rng& rng, TimeDirection direction = TimeDirection::forward);

namespace reference {

/// Serial transport kept as the oracle for the OpenMP kernel.
Samples transport_samples(const DriftFn& drift, const Samples& X0, const IntegratorConfig& cfg);

}  // namespace reference

}  // namespace bridgekit
