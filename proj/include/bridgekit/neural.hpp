#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bridgekit/common.hpp"
#include "bridgekit/dynamics.hpp"
#include "bridgekit/endpoints.hpp"

namespace bridgekit {

enum class Activation { tanh, relu };
enum class Direction { forward, backward };

std::string_view to_string(Activation a);
std::string_view to_string(Direction d);
Activation parse_activation(std::string_view name);
Direction parse_direction(std::string_view name);

/// Feed-forward drift f(x, t): input (x, t), hidden layers with the activation,
/// linear output of the state dimension. A backward network returns the drift in
/// reversed time, i.e. it is stepped as x_{t - dt} = x_t + f(x_t, t) dt.
///
/// Parameters live in one flat vector; layer l stores its weight (fan_out x
/// fan_in, row-major) followed by its bias.
class MlpDrift {
 public:
  using WeightMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstWeightMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  MlpDrift() = default;
  /// All parameters zero. layer_dims = {state_dim + 1, hidden..., state_dim}.
  MlpDrift(std::vector<int> layer_dims, Activation activation, Direction direction);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization of weights and biases.
  static MlpDrift initialized(int state_dim, const std::vector<int>& hidden, Activation activation,
                              Direction direction, Rng& rng);

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  Activation activation() const { return activation_; }
  Direction direction() const { return direction_; }
  int state_dim() const { return layer_dims_.back(); }
  int layers() const { return static_cast<int>(layer_dims_.size()) - 1; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  WeightMap weight(int l);
  ConstWeightMap weight(int l) const;
  Eigen::Map<Vector> bias(int l);
  Eigen::Map<const Vector> bias(int l) const;

  void forward(std::span<const double> x, double t, std::span<double> out) const;
  Vector forward(const Vector& x, double t) const;
  /// Row i of out = f(X.row(i), T(i)); row blocks are spread over OpenMP threads.
  void forward_batch(const Samples& X, const Vector& T, Samples& out) const;
  void forward_batch(const Samples& X, double t, Samples& out) const;

  DriftFn as_drift() const;
  BatchDriftFn as_batch_drift() const;

 private:
  std::vector<int> layer_dims_;
  std::vector<Eigen::Index> offsets_;  // start of layer l's weights in params_
  Activation activation_ = Activation::tanh;
  Direction direction_ = Direction::forward;
  Vector params_;
};

inline Vector mlp_forward(const MlpDrift& net, const Vector& x, double t) { return net.forward(x, t); }

struct GradResult {
  Vector grad;       // same layout as MlpDrift::parameters()
  double loss = 0.0; // (1/B) sum_i ||f(x_i, t_i) - v_i||^2
};

/// Exact reverse-mode gradient of the mean squared error. The batch is cut into
/// fixed 64-row shards whose partial gradients are summed in shard order, so the
/// result does not depend on the thread count.
GradResult mlp_grad(const MlpDrift& net, const Samples& X, const Vector& T, const Samples& V);

struct AdamState {
  Vector m;
  Vector v;
  long long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index n_params, double learning_rate)
      : m(Vector::Zero(n_params)), v(Vector::Zero(n_params)), lr(learning_rate) {}
};

/// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, Vector& params, const Vector& grads);

/// Linear DDPM variance schedule beta_k = beta_start + (beta_end - beta_start) k / n
/// for k = 1..n, with alpha_bar_k = prod_{s <= k} (1 - beta_s) and alpha_bar_0 = 1.
struct DdpmSchedule {
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int n_steps = 100;
  Vector betas;       // betas(k - 1) = beta_k
  Vector alpha_bars;  // alpha_bars(k), k = 0..n_steps

  static DdpmSchedule linear(double beta_start, double beta_end, int n_steps);
};

/// n trajectories of (points) states each: shape (batch, num_steps + 1, dim).
struct TrajectoryTensor {
  Eigen::Index batch = 0;
  Eigen::Index points = 0;
  Eigen::Index dim = 0;
  std::vector<double> data;

  TrajectoryTensor() = default;
  TrajectoryTensor(Eigen::Index batch, Eigen::Index points, Eigen::Index dim)
      : batch(batch), points(points), dim(dim), data(static_cast<std::size_t>(batch * points * dim)) {}

  std::span<double> at(Eigen::Index i, Eigen::Index k) {
    return {data.data() + (i * points + k) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> at(Eigen::Index i, Eigen::Index k) const {
    return {data.data() + (i * points + k) * dim, static_cast<std::size_t>(dim)};
  }
  /// Time spacing when the points cover t in [0, 1].
  double dt() const { return 1.0 / static_cast<double>(points - 1); }
};

/// Stepwise forward chain x_k = sqrt(1 - beta_k) x_{k-1} + sqrt(beta_k) eps_k.
TrajectoryTensor ddpm_forward_trajectories(const DdpmSchedule& schedule, const Samples& X0, Rng& rng);

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainConfig {
  int epochs = 10;
  double lr = 1e-3;
  int batch_size = 256;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
};

struct PretrainResult {
  // Per-epoch mean of the one-step residual losses.
  std::vector<double> forward_loss;
  std::vector<double> backward_loss;
  bool forward_improved = false;
  bool backward_improved = false;
};

/// One-step residual losses over every consecutive pair (X_k, X_{k+1}):
///   forward:  ||X_{k+1} - (X_k + f_fwd(X_k, t_k) dt)||^2
///   backward: ||X_k - (X_{k+1} + f_bwd(X_{k+1}, t_{k+1}) dt)||^2
struct PretrainLosses {
  double forward = 0.0;
  double backward = 0.0;
};
PretrainLosses pretrain_losses(const MlpDrift& net_fwd, const MlpDrift& net_bwd,
                               const TrajectoryTensor& trajectories);

/// Minimizes the residual losses above with Adam over shuffled minibatches.
/// Throws TrainingDivergedError when an epoch loss exceeds divergence_limit.
PretrainResult pretrain(MlpDrift& net_fwd, MlpDrift& net_bwd, const TrajectoryTensor& trajectories,
                        const PretrainConfig& cfg);

struct DsbmConfig {
  double sigma = 1.0;
  int imf_iters = 4;
  // Passes over the coupling set per half-iteration.
  int inner_epochs = 64;
  int batch_size = 256;
  int n_pairs = 4096;
  double lr = 1e-3;
  double eps_clip = 1e-3;
  int em_steps = 100;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::tanh;
  int n_eval = 10000;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
  // Evaluate W2 in both directions after every iteration (fills DsbmIteration).
  bool track_w2 = true;
  // Pretraining on DDPM trajectories from the source marginal; used by the pretrained variant.
  double ddpm_beta_start = 1e-4;
  double ddpm_beta_end = 0.02;
  int ddpm_steps = 100;
  int pretrain_trajectories = 1024;
  PretrainConfig pretrain_cfg;
};

void to_json(nlohmann::json& j, const DsbmConfig& c);
void from_json(const nlohmann::json& j, DsbmConfig& c);

struct DsbmIteration {
  int iteration = 0;
  double forward_loss = 0.0;
  double backward_loss = 0.0;
  // Gaussian-fit W2 of forward transport to the target and backward transport to the source.
  double w2_forward = 0.0;
  double w2_backward = 0.0;
};

struct DsbmResult {
  MlpDrift forward;
  MlpDrift backward;
  std::vector<DsbmIteration> history;
  // W2 of the reference coupling's terminal cloud X0 + sigma Z against the target.
  double w2_reference = 0.0;
  // Wall-clock time spent in the per-iteration W2 evaluation.
  double eval_seconds = 0.0;
};

/// Iterative Markovian fitting with Brownian-bridge regression. Iteration 0 is the
/// reference coupling X1 = X0 + sigma Z. Each iteration trains the backward net on
/// the current coupling, re-couples by simulating it backward from the target,
/// trains the forward net on that coupling, then re-couples by simulating forward
/// from the source. Regression targets at z_t are (X1 - z_t) / (1 - t) forward and
/// (X0 - z_t) / t backward with t ~ U(eps, 1 - eps).
DsbmResult dsbm_train(const EndpointSampler& endpoints, const DsbmConfig& cfg,
                      const std::optional<std::pair<MlpDrift, MlpDrift>>& pretrained = std::nullopt);

/// Euler-Maruyama push of X0 through the forward network.
Samples dsbm_sample(const MlpDrift& net, double sigma, const Samples& X0, int steps, Rng& rng);

void to_json(nlohmann::json& j, const MlpDrift& net);
void from_json(const nlohmann::json& j, MlpDrift& net);

/// CSV with header "iter,loss,w2"; loss is the mean of the two directions.
void write_training_curve(const std::string& path, const std::vector<DsbmIteration>& history);

namespace reference {

/// Whole-batch serial backpropagation, the oracle for the sharded kernel.
GradResult mlp_grad(const MlpDrift& net, const Samples& X, const Vector& T, const Samples& V);

}  // namespace reference

}  // namespace bridgekit
