#include "bridgekit/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bridgekit/interp.hpp"
#include "bridgekit/latent.hpp"

namespace bridgekit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double from_nullable(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.at(key).get<double>();
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sindy_fm:
      return "sindy_fm";
    case Method::dsbm:
      return "dsbm";
    case Method::dsbm_pretrained:
      return "dsbm_pretrained";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "sindy_fm") return Method::sindy_fm;
  if (name == "dsbm") return Method::dsbm;
  if (name == "dsbm_pretrained") return Method::dsbm_pretrained;
  throw std::invalid_argument("unknown method: " + std::string(name));
}

void to_json(nlohmann::json& j, const SindyFmSettings& s) {
  j = nlohmann::json{{"library", std::string(to_string(s.library))},
                     {"state_degree", s.state_degree},
                     {"time_degree", s.time_degree},
                     {"include_bias", s.include_bias},
                     {"points_per_traj", s.points_per_traj},
                     {"normalize_columns", s.normalize_columns},
                     {"solver", s.solver}};
}

void from_json(const nlohmann::json& j, SindyFmSettings& s) {
  s = SindyFmSettings{};
  if (j.contains("library")) s.library = parse_library_kind(j.at("library").get<std::string>());
  s.state_degree = j.value("state_degree", s.state_degree);
  if (j.contains("time_degree") && j.at("time_degree").is_string()) {
    if (j.at("time_degree").get<std::string>() != "auto") {
      throw std::invalid_argument("sindy_fm.time_degree must be an integer or \"auto\"");
    }
    s.time_degree = -1;
  } else {
    s.time_degree = j.value("time_degree", s.time_degree);
  }
  s.include_bias = j.value("include_bias", s.include_bias);
  s.points_per_traj = j.value("points_per_traj", s.points_per_traj);
  s.normalize_columns = j.value("normalize_columns", s.normalize_columns);
  if (j.contains("solver")) s.solver = j.at("solver").get<SparseSolverConfig>();
  if (s.points_per_traj < 1) throw std::invalid_argument("sindy_fm.points_per_traj must be >= 1");
  if (s.state_degree < 1) throw std::invalid_argument("sindy_fm.state_degree must be >= 1");
}

void validate(const ExperimentConfig& cfg) {
  for (Method m : cfg.methods) {
    if (m == Method::sindy_fm && !cfg.sindy_fm) {
      throw std::invalid_argument("config: method sindy_fm requires a sindy_fm block");
    }
    if ((m == Method::dsbm || m == Method::dsbm_pretrained) && !cfg.dsbm) {
      throw std::invalid_argument("config: method " + std::string(to_string(m)) + " requires a dsbm block");
    }
  }
  if (cfg.n_train_trajectories < 1) throw std::invalid_argument("config: n_train_trajectories must be >= 1");
  if (cfg.n_eval_samples < 2) throw std::invalid_argument("config: n_eval_samples must be >= 2");
  for (const auto& s : cfg.scenarios) {
    parse_scenario(s.name);
    if (s.dim < 1) throw std::invalid_argument("config: scenario dim must be >= 1");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(to_string(m));
  j = nlohmann::json{{"scenarios", c.scenarios},
                     {"methods", methods},
                     {"n_train_trajectories", c.n_train_trajectories},
                     {"n_eval_samples", c.n_eval_samples},
                     {"integrator", c.integrator},
                     {"seed", c.seed}};
  if (!c.latent_file.empty()) j["latent_file"] = c.latent_file;
  if (c.sindy_fm) j["sindy_fm"] = *c.sindy_fm;
  if (c.dsbm) j["dsbm"] = *c.dsbm;
  if (!c.output.empty()) j["output"] = c.output;
  if (!c.artifacts_dir.empty()) j["artifacts_dir"] = c.artifacts_dir;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::vector<ScenarioSpec>>();
  c.latent_file = j.value("latent_file", c.latent_file);
  if (j.contains("methods")) {
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
  }
  if (j.contains("sindy_fm")) c.sindy_fm = j.at("sindy_fm").get<SindyFmSettings>();
  if (j.contains("dsbm")) c.dsbm = j.at("dsbm").get<DsbmConfig>();
  c.n_train_trajectories = j.value("n_train_trajectories", c.n_train_trajectories);
  c.n_eval_samples = j.value("n_eval_samples", c.n_eval_samples);
  if (j.contains("integrator")) c.integrator = j.at("integrator").get<IntegratorConfig>();
  c.seed = j.value("seed", c.seed);
  c.output = j.value("output", c.output);
  c.artifacts_dir = j.value("artifacts_dir", c.artifacts_dir);
  validate(c);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

const std::vector<std::string>& metrics_fields() {
  static const std::vector<std::string> fields = {
      "scenario", "dim",   "mean_scale", "method",      "w2",
      "train_seconds", "inference_seconds_per_sample", "active_params", "integrator", "steps",
      "seed",     "w2_backward", "pretrain_seconds", "error"};
  return fields;
}

bool MetricsRow::operator==(const MetricsRow& o) const {
  return scenario == o.scenario && dim == o.dim && same_double(mean_scale, o.mean_scale) && method == o.method &&
         same_double(w2, o.w2) && same_double(train_seconds, o.train_seconds) &&
         same_double(inference_seconds_per_sample, o.inference_seconds_per_sample) &&
         active_params == o.active_params && integrator == o.integrator && steps == o.steps && seed == o.seed &&
         same_double(w2_backward, o.w2_backward) && same_double(pretrain_seconds, o.pretrain_seconds) &&
         error == o.error;
}

void to_json(nlohmann::json& j, const MetricsRow& r) {
  j = nlohmann::json{{"scenario", r.scenario},
                     {"dim", r.dim},
                     {"mean_scale", r.mean_scale},
                     {"method", r.method},
                     {"w2", nullable(r.w2)},
                     {"train_seconds", r.train_seconds},
                     {"inference_seconds_per_sample", r.inference_seconds_per_sample},
                     {"active_params", r.active_params},
                     {"integrator", r.integrator},
                     {"steps", r.steps},
                     {"seed", r.seed},
                     {"w2_backward", nullable(r.w2_backward)},
                     {"pretrain_seconds", r.pretrain_seconds},
                     {"error", r.error}};
}

void from_json(const nlohmann::json& j, MetricsRow& r) {
  r = MetricsRow{};
  r.scenario = j.at("scenario").get<std::string>();
  r.dim = j.at("dim").get<int>();
  r.mean_scale = j.at("mean_scale").get<double>();
  r.method = j.at("method").get<std::string>();
  r.w2 = from_nullable(j, "w2");
  r.train_seconds = j.at("train_seconds").get<double>();
  r.inference_seconds_per_sample = j.at("inference_seconds_per_sample").get<double>();
  r.active_params = j.at("active_params").get<long long>();
  r.integrator = j.at("integrator").get<std::string>();
  r.steps = j.at("steps").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.w2_backward = from_nullable(j, "w2_backward");
  r.pretrain_seconds = j.value("pretrain_seconds", 0.0);
  r.error = j.value("error", std::string{});
}

EndpointSource endpoints_for(const ScenarioSpec& spec) {
  EndpointSource src;
  src.scenario = parse_scenario(spec.name);
  src.sampler = std::make_unique<GaussianEndpoints>(make_scenario(spec));
  src.label = spec.name;
  src.mean_scale = spec.mean_scale;
  src.description = nlohmann::json{{"kind", "gaussian"}, {"scenario", spec}};
  return src;
}

EndpointSource endpoints_for_latent(const std::string& path) {
  EndpointSource src;
  src.sampler = std::make_unique<LatentPairs>(ingest_latent_pairs(path));
  src.latent = true;
  src.label = "latent:" + std::filesystem::path(path).stem().string();
  src.description = nlohmann::json{{"kind", "latent"}, {"path", path}};
  return src;
}

EndpointSource endpoints_from_description(const nlohmann::json& description) {
  const std::string kind = description.at("kind").get<std::string>();
  if (kind == "gaussian") return endpoints_for(description.at("scenario").get<ScenarioSpec>());
  if (kind == "latent") return endpoints_for_latent(description.at("path").get<std::string>());
  throw std::invalid_argument("unknown endpoint kind: " + kind);
}

int resolve_time_degree(const SindyFmSettings& s, const EndpointSource& src, int dim) {
  if (s.time_degree >= 0) return s.time_degree;
  return (!src.latent && src.scenario == Scenario::identity && dim >= 20) ? 1 : 2;
}

FeatureLibrary library_for(const SindyFmSettings& s, const EndpointSource& src, int dim) {
  const int R = resolve_time_degree(s, src, dim);
  if (s.library == LibraryKind::affine_time_poly) return FeatureLibrary::affine(dim, R, s.include_bias);
  return FeatureLibrary::monomial(dim, s.state_degree, R, s.include_bias);
}

SymbolicDrift train_sindy_fm(const EndpointSource& src, const SindyFmSettings& s, int n_train,
                             std::uint64_t seed) {
  const int d = src.sampler->dim();
  const FeatureLibrary lib = library_for(s, src, d);
  const auto start = Clock::now();
  const FMDataset ds = build_dataset(*src.sampler, Interpolant{}, n_train, s.points_per_traj, seed);
  FitOptions opts;
  opts.normalize_columns = s.normalize_columns;
  SymbolicDrift model = fit(ds, lib, s.solver, opts);
  model.fit_meta.train_seconds = seconds_since(start);
  model.fit_meta.source = nlohmann::json{{"endpoints", src.description},
                                         {"seed", seed},
                                         {"n_train_trajectories", n_train},
                                         {"points_per_traj", s.points_per_traj}};
  return model;
}

namespace {

MetricsRow run_sindy_cell(const ExperimentConfig& cfg, const EndpointSource& src, std::uint64_t cell_seed,
                          MetricsRow row) {
  const SymbolicDrift model = train_sindy_fm(src, *cfg.sindy_fm, cfg.n_train_trajectories, derive_seed(cell_seed, 0));
  row.train_seconds = model.fit_meta.train_seconds;
  row.active_params = model.fit_meta.active_count;
  row.integrator = std::string(to_string(cfg.integrator.method));
  row.steps = cfg.integrator.steps;

  Rng eval = derive_stream(cell_seed, 1);
  const Samples X0 = src.sampler->sample_side(Side::source, cfg.n_eval_samples, eval);
  const auto start = Clock::now();
  const Samples X1 = transport_samples(model.as_drift(), X0, cfg.integrator);
  row.inference_seconds_per_sample = seconds_since(start) / static_cast<double>(X0.rows());
  const Moments target = src.sampler->marginal(Side::target);
  row.w2 = gaussian_fit_w2(X1, target.mean, target.cov);
  return row;
}

MetricsRow run_dsbm_cell(const ExperimentConfig& cfg, const EndpointSource& src, std::uint64_t cell_seed,
                         bool pretrained, const std::string& artifact_stem, MetricsRow row) {
  DsbmConfig dc = *cfg.dsbm;
  dc.seed = derive_seed(cell_seed, 0);
  dc.track_w2 = !artifact_stem.empty();
  const int d = src.sampler->dim();

  std::optional<std::pair<MlpDrift, MlpDrift>> init;
  if (pretrained) {
    const auto start = Clock::now();
    Rng rng = derive_stream(cell_seed, 3);
    const Samples X0 = src.sampler->sample_side(Side::source, dc.pretrain_trajectories, rng);
    const auto schedule = DdpmSchedule::linear(dc.ddpm_beta_start, dc.ddpm_beta_end, dc.ddpm_steps);
    const TrajectoryTensor traj = ddpm_forward_trajectories(schedule, X0, rng);
    Rng init_rng = derive_stream(cell_seed, 4);
    MlpDrift f = MlpDrift::initialized(d, dc.hidden, dc.activation, Direction::forward, init_rng);
    MlpDrift b = MlpDrift::initialized(d, dc.hidden, dc.activation, Direction::backward, init_rng);
    PretrainConfig pc = dc.pretrain_cfg;
    pc.seed = derive_seed(cell_seed, 5);
    pc.divergence_limit = dc.divergence_limit;
    pretrain(f, b, traj, pc);
    init.emplace(std::move(f), std::move(b));
    row.pretrain_seconds = seconds_since(start);
  }

  const auto start = Clock::now();
  const DsbmResult res = dsbm_train(*src.sampler, dc, init);
  row.train_seconds = seconds_since(start) - res.eval_seconds;
  row.active_params = static_cast<long long>(res.forward.parameter_count());
  row.integrator = "euler_maruyama";
  row.steps = dc.em_steps;

  Rng eval = derive_stream(cell_seed, 1);
  const Samples X0 = src.sampler->sample_side(Side::source, cfg.n_eval_samples, eval);
  const Samples Y0 = src.sampler->sample_side(Side::target, cfg.n_eval_samples, eval);
  Rng noise = derive_stream(cell_seed, 2);
  const auto inf_start = Clock::now();
  const Samples X1 = dsbm_sample(res.forward, dc.sigma, X0, dc.em_steps, noise);
  row.inference_seconds_per_sample = seconds_since(inf_start) / static_cast<double>(X0.rows());
  const Samples Y1 = dsbm_sample(res.backward, dc.sigma, Y0, dc.em_steps, noise);

  const Moments target = src.sampler->marginal(Side::target);
  const Moments source = src.sampler->marginal(Side::source);
  row.w2 = gaussian_fit_w2(X1, target.mean, target.cov);
  row.w2_backward = gaussian_fit_w2(Y1, source.mean, source.cov);

  if (!artifact_stem.empty()) {
    std::ofstream(artifact_stem + "_forward.json") << nlohmann::json(res.forward).dump();
    std::ofstream(artifact_stem + "_backward.json") << nlohmann::json(res.backward).dump();
    write_training_curve(artifact_stem + "_curve.csv", res.history);
  }
  return row;
}

}  // namespace

std::vector<MetricsRow> run_benchmark(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<MetricsRow> rows;
  if (cfg.methods.empty()) return rows;
  if (!cfg.artifacts_dir.empty()) std::filesystem::create_directories(cfg.artifacts_dir);

  // Grid cells run one after another; each cell's kernels are OpenMP-parallel already.
  const std::size_t n_sources = cfg.latent_file.empty() ? cfg.scenarios.size() : 1;
  std::uint64_t cell = 0;
  for (std::size_t s = 0; s < n_sources; ++s) {
    std::optional<EndpointSource> src;
    std::string source_error;
    try {
      src = cfg.latent_file.empty() ? endpoints_for(cfg.scenarios[s]) : endpoints_for_latent(cfg.latent_file);
    } catch (const std::exception& e) {
      source_error = e.what();
    }
    for (Method m : cfg.methods) {
      const std::uint64_t cell_seed = derive_seed(cfg.seed, cell++);
      MetricsRow row;
      row.method = std::string(to_string(m));
      row.seed = cell_seed;
      if (cfg.latent_file.empty()) {
        row.scenario = cfg.scenarios[s].name;
        row.dim = cfg.scenarios[s].dim;
        row.mean_scale = cfg.scenarios[s].mean_scale;
      }
      if (!src) {
        if (!cfg.latent_file.empty()) row.scenario = "latent";
        row.error = source_error;
        rows.push_back(row);
        continue;
      }
      row.scenario = src->label;
      row.dim = src->sampler->dim();
      try {
        if (m == Method::sindy_fm) {
          row = run_sindy_cell(cfg, *src, cell_seed, row);
        } else {
          std::string stem;
          if (!cfg.artifacts_dir.empty()) {
            stem = (std::filesystem::path(cfg.artifacts_dir) / ("cell" + std::to_string(cell - 1) + "_" + row.method))
                       .string();
          }
          row = run_dsbm_cell(cfg, *src, cell_seed, m == Method::dsbm_pretrained, stem, row);
        }
      } catch (const std::exception& e) {
        row.error = e.what();
        row.w2 = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<SweepPoint> convergence_sweep(const DriftFn& drift, const EndpointSampler& endpoints,
                                          const std::vector<int>& steps_list, int n_eval, IntegratorMethod method,
                                          std::uint64_t seed) {
  if (steps_list.empty()) throw std::invalid_argument("convergence_sweep: steps_list is empty");
  for (std::size_t i = 0; i < steps_list.size(); ++i) {
    if (steps_list[i] < 1) throw std::invalid_argument("convergence_sweep: step counts must be >= 1");
    if (i > 0 && steps_list[i] <= steps_list[i - 1]) {
      throw std::invalid_argument("convergence_sweep: steps_list must be strictly ascending");
    }
  }
  Rng rng = derive_stream(seed, 0);
  const Samples X0 = endpoints.sample_side(Side::source, n_eval, rng);
  const Moments target = endpoints.marginal(Side::target);
  std::vector<SweepPoint> out;
  for (int k : steps_list) {
    IntegratorConfig ic;
    ic.method = method;
    ic.steps = k;
    out.push_back({k, gaussian_fit_w2(transport_samples(drift, X0, ic), target.mean, target.cov)});
  }
  return out;
}

ReportFormat report_format_for(const std::string& path) {
  return std::filesystem::path(path).extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
}

void emit_report(const std::vector<MetricsRow>& rows, ReportFormat format, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  if (format == ReportFormat::json) {
    os << nlohmann::json(rows).dump(2) << '\n';
  } else {
    const auto& fields = metrics_fields();
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << fields[i];
    os << '\n';
    for (const auto& r : rows) {
      os << csv_field(r.scenario) << ',' << r.dim << ',' << format_double(r.mean_scale) << ','
         << csv_field(r.method) << ',' << format_double(r.w2) << ',' << format_double(r.train_seconds) << ','
         << format_double(r.inference_seconds_per_sample) << ',' << r.active_params << ','
         << csv_field(r.integrator) << ',' << r.steps << ',' << r.seed << ',' << format_double(r.w2_backward)
         << ',' << format_double(r.pretrain_seconds) << ',' << csv_field(r.error) << '\n';
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<MetricsRow> read_report_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  is >> j;
  return j.get<std::vector<MetricsRow>>();
}

void write_samples_csv(const std::string& path, const Samples& X) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (Eigen::Index j = 0; j < X.cols(); ++j) os << (j ? "," : "") << 'x' << (j + 1);
  os << '\n';
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) os << (j ? "," : "") << format_double(X(i, j));
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace bridgekit
