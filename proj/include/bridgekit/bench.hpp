#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bridgekit/dynamics.hpp"
#include "bridgekit/endpoints.hpp"
#include "bridgekit/features.hpp"
#include "bridgekit/gauss.hpp"
#include "bridgekit/neural.hpp"
#include "bridgekit/sindyfm.hpp"
#include "bridgekit/sparsereg.hpp"

namespace bridgekit {

enum class Method { sindy_fm, dsbm, dsbm_pretrained };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct SindyFmSettings {
  LibraryKind library = LibraryKind::affine_time_poly;
  int state_degree = 1;
  // Negative selects automatically: 1 for identity scenarios with dim >= 20, else 2.
  int time_degree = -1;
  bool include_bias = true;
  int points_per_traj = 2;
  bool normalize_columns = false;
  SparseSolverConfig solver;
};

void to_json(nlohmann::json& j, const SindyFmSettings& s);
void from_json(const nlohmann::json& j, SindyFmSettings& s);

struct ExperimentConfig {
  std::vector<ScenarioSpec> scenarios;
  // When non-empty, the grid runs on this pair file instead of the scenarios.
  std::string latent_file;
  std::vector<Method> methods;
  std::optional<SindyFmSettings> sindy_fm;
  std::optional<DsbmConfig> dsbm;
  int n_train_trajectories = 50000;
  int n_eval_samples = 10000;
  IntegratorConfig integrator;
  std::uint64_t seed = 0;
  std::string output;
  // Optional directory for DSBM checkpoints and training curves.
  std::string artifacts_dir;
};

/// Throws std::invalid_argument when a referenced method lacks its block or a
/// field is out of range.
void validate(const ExperimentConfig& cfg);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::string& path);

struct MetricsRow {
  std::string scenario;
  int dim = 0;
  double mean_scale = 0.0;
  std::string method;
  double w2 = std::numeric_limits<double>::quiet_NaN();
  double train_seconds = 0.0;
  double inference_seconds_per_sample = 0.0;
  long long active_params = 0;
  std::string integrator;
  int steps = 0;
  std::uint64_t seed = 0;
  // Backward transport to the source; NaN when the method has no backward model.
  double w2_backward = std::numeric_limits<double>::quiet_NaN();
  double pretrain_seconds = 0.0;
  // Empty for successful cells.
  std::string error;

  bool operator==(const MetricsRow& other) const;
};

/// Column names in report order.
const std::vector<std::string>& metrics_fields();

void to_json(nlohmann::json& j, const MetricsRow& r);
void from_json(const nlohmann::json& j, MetricsRow& r);

/// Where a model's endpoints came from, enough to rebuild the sampler later.
struct EndpointSource {
  std::unique_ptr<EndpointSampler> sampler;
  std::string label;
  double mean_scale = 0.0;
  Scenario scenario = Scenario::identity;
  bool latent = false;
  nlohmann::json description;
};

EndpointSource endpoints_for(const ScenarioSpec& spec);
EndpointSource endpoints_for_latent(const std::string& path);
/// Inverse of EndpointSource::description.
EndpointSource endpoints_from_description(const nlohmann::json& description);

int resolve_time_degree(const SindyFmSettings& s, const EndpointSource& src, int dim);
FeatureLibrary library_for(const SindyFmSettings& s, const EndpointSource& src, int dim);

/// Dataset construction plus sparse fit; fit_meta.source records the endpoints,
/// seed and dataset sizes, and train_seconds covers both phases.
SymbolicDrift train_sindy_fm(const EndpointSource& src, const SindyFmSettings& s, int n_train,
                             std::uint64_t seed);

/// Every (scenario x method) cell in config order. Cell c draws all randomness
/// from derive_seed(cfg.seed, c). Failures become rows with the error column set.
std::vector<MetricsRow> run_benchmark(const ExperimentConfig& cfg);

struct SweepPoint {
  int steps = 0;
  double w2 = 0.0;
};

/// W2 of the transported cloud against the target for each step count. Every
/// entry reuses the same evaluation draws so only the discretization changes.
std::vector<SweepPoint> convergence_sweep(const DriftFn& drift, const EndpointSampler& endpoints,
                                          const std::vector<int>& steps_list, int n_eval,
                                          IntegratorMethod method = IntegratorMethod::euler,
                                          std::uint64_t seed = 0);

enum class ReportFormat { csv, json };

/// json for a ".json" suffix, csv otherwise.
ReportFormat report_format_for(const std::string& path);
void emit_report(const std::vector<MetricsRow>& rows, ReportFormat format, const std::string& path);
std::vector<MetricsRow> read_report_json(const std::string& path);

/// Writes a sample cloud as CSV with header x1..xd, full precision.
void write_samples_csv(const std::string& path, const Samples& X);

}  // namespace bridgekit
