#include "bridgekit/neural.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "bridgekit/gauss.hpp"

namespace bridgekit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr Eigen::Index kForwardBlock = 256;
constexpr Eigen::Index kGradShard = 64;

void apply_activation(Activation a, RowMat& Z) {
  if (a == Activation::tanh) {
    Z = Z.array().tanh().matrix();
  } else {
    Z = Z.cwiseMax(0.0);
  }
}

// Derivative expressed through the activation output h.
void scale_by_activation_grad(Activation a, const RowMat& H, RowMat& delta) {
  if (a == Activation::tanh) {
    delta.array() *= 1.0 - H.array().square();
  } else {
    delta.array() *= (H.array() > 0.0).cast<double>();
  }
}

RowMat input_block(const Samples& X, const Vector& T, Eigen::Index begin, Eigen::Index rows) {
  RowMat H(rows, X.cols() + 1);
  H.leftCols(X.cols()) = X.middleRows(begin, rows);
  H.col(X.cols()) = T.segment(begin, rows);
  return H;
}

RowMat forward_block(const MlpDrift& net, RowMat H) {
  for (int l = 0; l < net.layers(); ++l) {
    RowMat Z = H * net.weight(l).transpose();
    Z.rowwise() += net.bias(l).transpose();
    if (l + 1 < net.layers()) apply_activation(net.activation(), Z);
    H = std::move(Z);
  }
  return H;
}

// Sum-of-squares loss and gradient over rows [begin, begin + rows), accumulated into grad.
double backprop_block(const MlpDrift& net, const Samples& X, const Vector& T, const Samples& V,
                      Eigen::Index begin, Eigen::Index rows, Vector& grad, const std::vector<Eigen::Index>& offsets) {
  const int L = net.layers();
  std::vector<RowMat> acts(static_cast<std::size_t>(L) + 1);
  acts[0] = input_block(X, T, begin, rows);
  for (int l = 0; l < L; ++l) {
    RowMat Z = acts[l] * net.weight(l).transpose();
    Z.rowwise() += net.bias(l).transpose();
    if (l + 1 < L) apply_activation(net.activation(), Z);
    acts[l + 1] = std::move(Z);
  }
  RowMat delta = acts[L] - V.middleRows(begin, rows);
  const double loss = delta.squaredNorm();
  delta *= 2.0;
  for (int l = L - 1; l >= 0; --l) {
    const int fan_in = net.layer_dims()[l];
    const int fan_out = net.layer_dims()[l + 1];
    Eigen::Map<RowMat> gW(grad.data() + offsets[l], fan_out, fan_in);
    Eigen::Map<Vector> gb(grad.data() + offsets[l] + static_cast<Eigen::Index>(fan_out) * fan_in, fan_out);
    gW.noalias() += delta.transpose() * acts[l];
    gb += delta.colwise().sum().transpose();
    if (l > 0) {
      RowMat prev = delta * net.weight(l);
      scale_by_activation_grad(net.activation(), acts[l], prev);
      delta = std::move(prev);
    }
  }
  return loss;
}

void check_grad_shapes(const MlpDrift& net, const Samples& X, const Vector& T, const Samples& V) {
  if (X.cols() != net.state_dim() || V.cols() != net.state_dim() || T.size() != X.rows() ||
      V.rows() != X.rows()) {
    throw DimensionError("mlp_grad: batch shapes do not match the network");
  }
  if (X.rows() == 0) throw std::invalid_argument("mlp_grad: empty batch");
}

std::vector<Eigen::Index> layer_offsets(const std::vector<int>& dims) {
  std::vector<Eigen::Index> off;
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    off.push_back(pos);
    pos += static_cast<Eigen::Index>(dims[l + 1]) * dims[l] + dims[l + 1];
  }
  off.push_back(pos);
  return off;
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

Direction parse_direction(std::string_view name) {
  if (name == "forward") return Direction::forward;
  if (name == "backward") return Direction::backward;
  throw std::invalid_argument("unknown direction: " + std::string(name));
}

MlpDrift::MlpDrift(std::vector<int> layer_dims, Activation activation, Direction direction)
    : layer_dims_(std::move(layer_dims)), activation_(activation), direction_(direction) {
  if (layer_dims_.size() < 2) throw std::invalid_argument("MlpDrift: need at least input and output layers");
  for (int w : layer_dims_) {
    if (w < 1) throw std::invalid_argument("MlpDrift: layer widths must be positive");
  }
  if (layer_dims_.front() != layer_dims_.back() + 1) {
    throw DimensionError("MlpDrift: input width must be state_dim + 1");
  }
  offsets_ = layer_offsets(layer_dims_);
  params_ = Vector::Zero(offsets_.back());
}

MlpDrift MlpDrift::initialized(int state_dim, const std::vector<int>& hidden, Activation activation,
                               Direction direction, Rng& rng) {
  std::vector<int> dims;
  dims.push_back(state_dim + 1);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(state_dim);
  MlpDrift net(dims, activation, direction);
  for (int l = 0; l < net.layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto W = net.weight(l);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
  }
  return net;
}

MlpDrift::WeightMap MlpDrift::weight(int l) {
  return {params_.data() + offsets_[l], layer_dims_[l + 1], layer_dims_[l]};
}

MlpDrift::ConstWeightMap MlpDrift::weight(int l) const {
  return {params_.data() + offsets_[l], layer_dims_[l + 1], layer_dims_[l]};
}

Eigen::Map<Vector> MlpDrift::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(layer_dims_[l + 1]) * layer_dims_[l],
          layer_dims_[l + 1]};
}

Eigen::Map<const Vector> MlpDrift::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(layer_dims_[l + 1]) * layer_dims_[l],
          layer_dims_[l + 1]};
}

void MlpDrift::forward(std::span<const double> x, double t, std::span<double> out) const {
  if (static_cast<int>(x.size()) != state_dim() || static_cast<int>(out.size()) != state_dim()) {
    throw DimensionError("MlpDrift::forward: state dimension mismatch");
  }
  Vector h(state_dim() + 1);
  h.head(state_dim()) = as_vector(x);
  h(state_dim()) = t;
  for (int l = 0; l < layers(); ++l) {
    Vector z = weight(l) * h + bias(l);
    if (l + 1 < layers()) {
      if (activation_ == Activation::tanh) {
        z = z.array().tanh().matrix();
      } else {
        z = z.cwiseMax(0.0);
      }
    }
    h = std::move(z);
  }
  as_vector(out) = h;
}

Vector MlpDrift::forward(const Vector& x, double t) const {
  Vector out(state_dim());
  forward({x.data(), static_cast<std::size_t>(x.size())}, t, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

void MlpDrift::forward_batch(const Samples& X, const Vector& T, Samples& out) const {
  if (X.cols() != state_dim() || T.size() != X.rows()) {
    throw DimensionError("MlpDrift::forward_batch: batch shapes do not match the network");
  }
  const Eigen::Index n = X.rows();
  out.resize(n, state_dim());
  const Eigen::Index blocks = (n + kForwardBlock - 1) / kForwardBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index begin = b * kForwardBlock;
    const Eigen::Index rows = std::min(kForwardBlock, n - begin);
    out.middleRows(begin, rows) = forward_block(*this, input_block(X, T, begin, rows));
  }
}

void MlpDrift::forward_batch(const Samples& X, double t, Samples& out) const {
  forward_batch(X, Vector::Constant(X.rows(), t), out);
}

DriftFn MlpDrift::as_drift() const {
  return [net = *this](std::span<const double> x, double t, std::span<double> out) { net.forward(x, t, out); };
}

BatchDriftFn MlpDrift::as_batch_drift() const {
  return [net = *this](const Samples& X, double t, Samples& out) { net.forward_batch(X, t, out); };
}

GradResult mlp_grad(const MlpDrift& net, const Samples& X, const Vector& T, const Samples& V) {
  check_grad_shapes(net, X, T, V);
  const auto offsets = layer_offsets(net.layer_dims());
  const Eigen::Index n = X.rows();
  const Eigen::Index shards = (n + kGradShard - 1) / kGradShard;
  const auto P = static_cast<Eigen::Index>(net.parameter_count());
  std::vector<Vector> partial(static_cast<std::size_t>(shards));
  std::vector<double> losses(static_cast<std::size_t>(shards), 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index s = 0; s < shards; ++s) {
    const Eigen::Index begin = s * kGradShard;
    const Eigen::Index rows = std::min(kGradShard, n - begin);
    partial[s] = Vector::Zero(P);
    losses[s] = backprop_block(net, X, T, V, begin, rows, partial[s], offsets);
  }
  GradResult r{Vector::Zero(P), 0.0};
  for (Eigen::Index s = 0; s < shards; ++s) {
    r.grad += partial[s];
    r.loss += losses[s];
  }
  r.grad /= static_cast<double>(n);
  r.loss /= static_cast<double>(n);
  return r;
}

namespace reference {

GradResult mlp_grad(const MlpDrift& net, const Samples& X, const Vector& T, const Samples& V) {
  check_grad_shapes(net, X, T, V);
  const auto offsets = layer_offsets(net.layer_dims());
  GradResult r{Vector::Zero(static_cast<Eigen::Index>(net.parameter_count())), 0.0};
  r.loss = backprop_block(net, X, T, V, 0, X.rows(), r.grad, offsets);
  r.grad /= static_cast<double>(X.rows());
  r.loss /= static_cast<double>(X.rows());
  return r;
}

}  // namespace reference

void adam_step(AdamState& s, Vector& params, const Vector& grads) {
  if (params.size() != grads.size() || s.m.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

DdpmSchedule DdpmSchedule::linear(double beta_start, double beta_end, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("ddpm: n_steps must be >= 1");
  if (!(beta_start > 0 && beta_start < 1 && beta_end > 0 && beta_end < 1)) {
    throw std::invalid_argument("ddpm: betas must lie in (0, 1)");
  }
  DdpmSchedule s;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.n_steps = n_steps;
  s.betas.resize(n_steps);
  s.alpha_bars.resize(n_steps + 1);
  s.alpha_bars(0) = 1.0;
  for (int k = 1; k <= n_steps; ++k) {
    s.betas(k - 1) = beta_start + (beta_end - beta_start) * k / n_steps;
    s.alpha_bars(k) = s.alpha_bars(k - 1) * (1.0 - s.betas(k - 1));
  }
  return s;
}

TrajectoryTensor ddpm_forward_trajectories(const DdpmSchedule& schedule, const Samples& X0, Rng& rng) {
  const Eigen::Index n = X0.rows();
  const Eigen::Index d = X0.cols();
  TrajectoryTensor traj(n, schedule.n_steps + 1, d);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto x = as_vector(traj.at(i, 0));
    x = X0.row(i).transpose();
    for (int k = 1; k <= schedule.n_steps; ++k) {
      const double beta = schedule.betas(k - 1);
      auto prev = as_vector(std::as_const(traj).at(i, k - 1));
      auto next = as_vector(traj.at(i, k));
      const double a = std::sqrt(1.0 - beta);
      const double b = std::sqrt(beta);
      for (Eigen::Index j = 0; j < d; ++j) next(j) = a * prev(j) + b * normal(rng);
    }
  }
  return traj;
}

namespace {

// Regression pairs for the drift nets. The forward net learns (X_{k+1} - X_k)/dt at
// (X_k, t_k); the backward net learns (X_k - X_{k+1})/dt at (X_{k+1}, t_{k+1}).
struct StepPairs {
  Samples X;
  Vector T;
  Samples V;
};

StepPairs step_pairs(const TrajectoryTensor& traj, Direction dir) {
  const Eigen::Index steps = traj.points - 1;
  const double dt = traj.dt();
  StepPairs p{Samples(traj.batch * steps, traj.dim), Vector(traj.batch * steps),
              Samples(traj.batch * steps, traj.dim)};
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < traj.batch; ++i) {
    for (Eigen::Index k = 0; k < steps; ++k, ++r) {
      auto a = as_vector(traj.at(i, k));
      auto b = as_vector(traj.at(i, k + 1));
      if (dir == Direction::forward) {
        p.X.row(r) = a.transpose();
        p.T(r) = k * dt;
        p.V.row(r) = ((b - a) / dt).transpose();
      } else {
        p.X.row(r) = b.transpose();
        p.T(r) = (k + 1) * dt;
        p.V.row(r) = ((a - b) / dt).transpose();
      }
    }
  }
  return p;
}

double mean_drift_loss(const MlpDrift& net, const StepPairs& p) {
  Samples out;
  net.forward_batch(p.X, p.T, out);
  return (out - p.V).squaredNorm() / static_cast<double>(p.X.rows());
}

void gather(const StepPairs& p, const std::vector<Eigen::Index>& idx, std::size_t begin, std::size_t end,
            StepPairs& batch) {
  const auto rows = static_cast<Eigen::Index>(end - begin);
  batch.X.resize(rows, p.X.cols());
  batch.T.resize(rows);
  batch.V.resize(rows, p.V.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index src = idx[begin + static_cast<std::size_t>(r)];
    batch.X.row(r) = p.X.row(src);
    batch.T(r) = p.T(src);
    batch.V.row(r) = p.V.row(src);
  }
}

void check_loss(double loss, double limit, const std::string& where) {
  if (!std::isfinite(loss) || loss > limit) {
    throw TrainingDivergedError(where + ": loss " + std::to_string(loss) + " exceeded divergence limit");
  }
}

}  // namespace

PretrainLosses pretrain_losses(const MlpDrift& net_fwd, const MlpDrift& net_bwd, const TrajectoryTensor& traj) {
  const double dt2 = traj.dt() * traj.dt();
  return {dt2 * mean_drift_loss(net_fwd, step_pairs(traj, Direction::forward)),
          dt2 * mean_drift_loss(net_bwd, step_pairs(traj, Direction::backward))};
}

PretrainResult pretrain(MlpDrift& net_fwd, MlpDrift& net_bwd, const TrajectoryTensor& traj,
                        const PretrainConfig& cfg) {
  if (traj.points < 2 || traj.batch < 1) throw std::invalid_argument("pretrain: need at least one step");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0)) {
    throw std::invalid_argument("pretrain: epochs, batch_size and lr must be positive");
  }
  if (net_fwd.state_dim() != traj.dim || net_bwd.state_dim() != traj.dim) {
    throw DimensionError("pretrain: network and trajectory dimensions differ");
  }
  const double dt2 = traj.dt() * traj.dt();
  const StepPairs fwd_pairs = step_pairs(traj, Direction::forward);
  const StepPairs bwd_pairs = step_pairs(traj, Direction::backward);
  const double fwd_init = dt2 * mean_drift_loss(net_fwd, fwd_pairs);
  const double bwd_init = dt2 * mean_drift_loss(net_bwd, bwd_pairs);

  Rng rng = derive_stream(cfg.seed, 0);
  AdamState adam_f(static_cast<Eigen::Index>(net_fwd.parameter_count()), cfg.lr);
  AdamState adam_b(static_cast<Eigen::Index>(net_bwd.parameter_count()), cfg.lr);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(fwd_pairs.X.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  PretrainResult result;
  StepPairs batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double sum_f = 0.0;
    double sum_b = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < idx.size(); begin += bs) {
      const std::size_t end = std::min(idx.size(), begin + bs);
      const auto w = static_cast<double>(end - begin);
      gather(fwd_pairs, idx, begin, end, batch);
      GradResult gf = mlp_grad(net_fwd, batch.X, batch.T, batch.V);
      adam_step(adam_f, net_fwd.parameters(), gf.grad);
      gather(bwd_pairs, idx, begin, end, batch);
      GradResult gb = mlp_grad(net_bwd, batch.X, batch.T, batch.V);
      adam_step(adam_b, net_bwd.parameters(), gb.grad);
      sum_f += gf.loss * w;
      sum_b += gb.loss * w;
      seen += end - begin;
    }
    const double lf = dt2 * sum_f / static_cast<double>(seen);
    const double lb = dt2 * sum_b / static_cast<double>(seen);
    check_loss(lf, cfg.divergence_limit, "pretrain forward epoch " + std::to_string(epoch));
    check_loss(lb, cfg.divergence_limit, "pretrain backward epoch " + std::to_string(epoch));
    result.forward_loss.push_back(lf);
    result.backward_loss.push_back(lb);
  }
  result.forward_improved = dt2 * mean_drift_loss(net_fwd, fwd_pairs) < fwd_init;
  result.backward_improved = dt2 * mean_drift_loss(net_bwd, bwd_pairs) < bwd_init;
  return result;
}

void to_json(nlohmann::json& j, const DsbmConfig& c) {
  j = nlohmann::json{{"sigma", c.sigma},
                     {"imf_iters", c.imf_iters},
                     {"inner_epochs", c.inner_epochs},
                     {"batch_size", c.batch_size},
                     {"n_pairs", c.n_pairs},
                     {"lr", c.lr},
                     {"eps_clip", c.eps_clip},
                     {"em_steps", c.em_steps},
                     {"hidden", c.hidden},
                     {"activation", std::string(to_string(c.activation))},
                     {"n_eval", c.n_eval},
                     {"seed", c.seed},
                     {"divergence_limit", c.divergence_limit},
                     {"track_w2", c.track_w2},
                     {"ddpm_beta_start", c.ddpm_beta_start},
                     {"ddpm_beta_end", c.ddpm_beta_end},
                     {"ddpm_steps", c.ddpm_steps},
                     {"pretrain_trajectories", c.pretrain_trajectories},
                     {"pretrain_epochs", c.pretrain_cfg.epochs},
                     {"pretrain_lr", c.pretrain_cfg.lr}};
}

void from_json(const nlohmann::json& j, DsbmConfig& c) {
  c = DsbmConfig{};
  c.sigma = j.value("sigma", c.sigma);
  c.imf_iters = j.value("imf_iters", c.imf_iters);
  c.inner_epochs = j.value("inner_epochs", c.inner_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.n_pairs = j.value("n_pairs", c.n_pairs);
  c.lr = j.value("lr", c.lr);
  c.eps_clip = j.value("eps_clip", c.eps_clip);
  c.em_steps = j.value("em_steps", c.em_steps);
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
  c.n_eval = j.value("n_eval", c.n_eval);
  c.seed = j.value("seed", c.seed);
  c.divergence_limit = j.value("divergence_limit", c.divergence_limit);
  c.track_w2 = j.value("track_w2", c.track_w2);
  c.ddpm_beta_start = j.value("ddpm_beta_start", c.ddpm_beta_start);
  c.ddpm_beta_end = j.value("ddpm_beta_end", c.ddpm_beta_end);
  c.ddpm_steps = j.value("ddpm_steps", c.ddpm_steps);
  c.pretrain_trajectories = j.value("pretrain_trajectories", c.pretrain_trajectories);
  c.pretrain_cfg.epochs = j.value("pretrain_epochs", c.pretrain_cfg.epochs);
  c.pretrain_cfg.lr = j.value("pretrain_lr", c.pretrain_cfg.lr);

  if (!(c.sigma > 0)) throw std::invalid_argument("dsbm: sigma must be > 0");
  if (c.imf_iters < 0) throw std::invalid_argument("dsbm: imf_iters must be >= 0");
  if (c.inner_epochs < 1 || c.batch_size < 1 || c.n_pairs < 2 || c.em_steps < 1 || c.n_eval < 2) {
    throw std::invalid_argument("dsbm: epochs, batch_size, n_pairs, em_steps and n_eval must be positive");
  }
  if (!(c.lr > 0)) throw std::invalid_argument("dsbm: lr must be > 0");
  if (!(c.eps_clip > 0 && c.eps_clip < 0.5)) throw std::invalid_argument("dsbm: eps_clip must lie in (0, 0.5)");
}

namespace {

// One half-iteration: fit net to the Brownian-bridge targets of the coupling (Z0, Z1).
double train_half(MlpDrift& net, const Samples& Z0, const Samples& Z1, const DsbmConfig& cfg, Rng& rng,
                  const std::string& where) {
  const Eigen::Index n = Z0.rows();
  const Eigen::Index d = Z0.cols();
  AdamState adam(static_cast<Eigen::Index>(net.parameter_count()), cfg.lr);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::uniform_real_distribution<double> ut(cfg.eps_clip, 1.0 - cfg.eps_clip);
  std::normal_distribution<double> normal;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const bool fwd = net.direction() == Direction::forward;

  double epoch_loss = 0.0;
  Samples X;
  Samples V;
  Vector T;
  for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double sum = 0.0;
    for (std::size_t begin = 0; begin < idx.size(); begin += bs) {
      const std::size_t end = std::min(idx.size(), begin + bs);
      const auto rows = static_cast<Eigen::Index>(end - begin);
      X.resize(rows, d);
      V.resize(rows, d);
      T.resize(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index src = idx[begin + static_cast<std::size_t>(r)];
        const double t = ut(rng);
        const double s = cfg.sigma * std::sqrt(t * (1.0 - t));
        T(r) = t;
        for (Eigen::Index j = 0; j < d; ++j) {
          const double z = (1.0 - t) * Z0(src, j) + t * Z1(src, j) + s * normal(rng);
          X(r, j) = z;
          V(r, j) = fwd ? (Z1(src, j) - z) / (1.0 - t) : (Z0(src, j) - z) / t;
        }
      }
      GradResult g = mlp_grad(net, X, T, V);
      adam_step(adam, net.parameters(), g.grad);
      sum += g.loss * static_cast<double>(rows);
    }
    epoch_loss = sum / static_cast<double>(n);
    check_loss(epoch_loss, cfg.divergence_limit, where + " epoch " + std::to_string(epoch));
  }
  return epoch_loss;
}

double fit_w2(const Samples& X, const Moments& m) { return gaussian_fit_w2(X, m.mean, m.cov); }

}  // namespace

Samples dsbm_sample(const MlpDrift& net, double sigma, const Samples& X0, int steps, Rng& rng) {
  const TimeDirection dir =
      net.direction() == Direction::forward ? TimeDirection::forward : TimeDirection::backward;
  return euler_maruyama_batch(net.as_batch_drift(), sigma, X0, steps, rng, dir);
}

DsbmResult dsbm_train(const EndpointSampler& endpoints, const DsbmConfig& cfg,
                      const std::optional<std::pair<MlpDrift, MlpDrift>>& pretrained) {
  const int d = endpoints.dim();
  DsbmResult result;
  if (pretrained) {
    result.forward = pretrained->first;
    result.backward = pretrained->second;
    if (result.forward.state_dim() != d || result.backward.state_dim() != d) {
      throw DimensionError("dsbm: pretrained networks do not match the endpoint dimension");
    }
    if (result.forward.direction() != Direction::forward || result.backward.direction() != Direction::backward) {
      throw std::invalid_argument("dsbm: pretrained pair must be (forward, backward)");
    }
  } else {
    Rng init = derive_stream(cfg.seed, 1);
    result.forward = MlpDrift::initialized(d, cfg.hidden, cfg.activation, Direction::forward, init);
    result.backward = MlpDrift::initialized(d, cfg.hidden, cfg.activation, Direction::backward, init);
  }

  const Moments source = endpoints.marginal(Side::source);
  const Moments target = endpoints.marginal(Side::target);

  Rng rng = derive_stream(cfg.seed, 2);
  std::normal_distribution<double> normal;
  Samples Z0 = endpoints.sample_side(Side::source, cfg.n_pairs, rng);
  Samples Z1 = Z0;
  for (Eigen::Index i = 0; i < Z1.rows(); ++i)
    for (Eigen::Index j = 0; j < Z1.cols(); ++j) Z1(i, j) += cfg.sigma * normal(rng);
  {
    Rng eval = derive_stream(cfg.seed, 3);
    Samples X0 = endpoints.sample_side(Side::source, cfg.n_eval, eval);
    for (Eigen::Index i = 0; i < X0.rows(); ++i)
      for (Eigen::Index j = 0; j < X0.cols(); ++j) X0(i, j) += cfg.sigma * normal(eval);
    result.w2_reference = fit_w2(X0, target);
  }

  for (int it = 1; it <= cfg.imf_iters; ++it) {
    DsbmIteration rec;
    rec.iteration = it;
    const std::string tag = "dsbm iteration " + std::to_string(it);

    rec.backward_loss = train_half(result.backward, Z0, Z1, cfg, rng, tag + " backward");
    Z1 = endpoints.sample_side(Side::target, cfg.n_pairs, rng);
    Z0 = dsbm_sample(result.backward, cfg.sigma, Z1, cfg.em_steps, rng);

    rec.forward_loss = train_half(result.forward, Z0, Z1, cfg, rng, tag + " forward");
    Z0 = endpoints.sample_side(Side::source, cfg.n_pairs, rng);
    Z1 = dsbm_sample(result.forward, cfg.sigma, Z0, cfg.em_steps, rng);

    if (!cfg.track_w2) {
      result.history.push_back(rec);
      continue;
    }
    const auto eval_start = std::chrono::steady_clock::now();
    Rng eval = derive_stream(cfg.seed, 100 + static_cast<std::uint64_t>(it));
    Samples E0 = endpoints.sample_side(Side::source, cfg.n_eval, eval);
    rec.w2_forward = fit_w2(dsbm_sample(result.forward, cfg.sigma, E0, cfg.em_steps, eval), target);
    Samples E1 = endpoints.sample_side(Side::target, cfg.n_eval, eval);
    rec.w2_backward = fit_w2(dsbm_sample(result.backward, cfg.sigma, E1, cfg.em_steps, eval), source);
    result.eval_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - eval_start).count();
    result.history.push_back(rec);
  }
  return result;
}

void to_json(nlohmann::json& j, const MlpDrift& net) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int l = 0; l < net.layers(); ++l) {
    auto W = net.weight(l);
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      std::vector<double> row(W.cols());
      for (Eigen::Index k = 0; k < W.cols(); ++k) row[static_cast<std::size_t>(k)] = W(i, k);
      rows.push_back(row);
    }
    weights.push_back(rows);
    auto b = net.bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  j = nlohmann::json{{"layer_dims", net.layer_dims()},
                     {"activation", std::string(to_string(net.activation()))},
                     {"direction", std::string(to_string(net.direction()))},
                     {"weights", weights},
                     {"biases", biases}};
}

void from_json(const nlohmann::json& j, MlpDrift& net) {
  MlpDrift out(j.at("layer_dims").get<std::vector<int>>(),
               parse_activation(j.at("activation").get<std::string>()),
               parse_direction(j.at("direction").get<std::string>()));
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != static_cast<std::size_t>(out.layers()) ||
      biases.size() != static_cast<std::size_t>(out.layers())) {
    throw DimensionError("checkpoint: layer count does not match layer_dims");
  }
  for (int l = 0; l < out.layers(); ++l) {
    auto W = out.weight(l);
    const auto& rows = weights.at(static_cast<std::size_t>(l));
    if (rows.size() != static_cast<std::size_t>(W.rows())) throw DimensionError("checkpoint: weight shape mismatch");
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      const auto row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(W.cols())) throw DimensionError("checkpoint: weight shape mismatch");
      for (Eigen::Index k = 0; k < W.cols(); ++k) W(i, k) = row[static_cast<std::size_t>(k)];
    }
    const auto b = biases.at(static_cast<std::size_t>(l)).get<std::vector<double>>();
    if (b.size() != static_cast<std::size_t>(out.bias(l).size())) throw DimensionError("checkpoint: bias shape mismatch");
    out.bias(l) = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  net = std::move(out);
}

void write_training_curve(const std::string& path, const std::vector<DsbmIteration>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.precision(17);
  os << "iter,loss,w2\n";
  for (const auto& h : history) {
    os << h.iteration << ',' << 0.5 * (h.forward_loss + h.backward_loss) << ',' << h.w2_forward << '\n';
  }
}

}  // namespace bridgekit
