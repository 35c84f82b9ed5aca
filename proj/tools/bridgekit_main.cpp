#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bridgekit/bench.hpp"
#include "bridgekit/latent.hpp"
#include "bridgekit/sindyfm.hpp"

namespace bk = bridgekit;

namespace {

// Errors go to stderr as a single JSON object per line.
void report_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("BRIDGEKIT_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(raw, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != std::string(raw).size()) {
    throw std::invalid_argument(std::string("BRIDGEKIT_SEED is not an unsigned integer: ") + raw);
  }
  return v;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  is >> j;
  return j;
}

bk::EndpointSource model_endpoints(const bk::SymbolicDrift& model) {
  const auto& src = model.fit_meta.source;
  if (!src.contains("endpoints")) {
    throw std::invalid_argument("model has no endpoint description; refit it with `bridgekit fit`");
  }
  auto ep = bk::endpoints_from_description(src.at("endpoints"));
  if (ep.sampler->dim() != model.dim()) throw bk::DimensionError("model and endpoint dimensions differ");
  return ep;
}

std::uint64_t model_seed(const bk::SymbolicDrift& model, std::optional<std::uint64_t> flag) {
  if (auto e = env_seed()) return *e;
  if (flag) return *flag;
  return model.fit_meta.source.value("seed", std::uint64_t{0});
}

std::vector<int> parse_steps(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("bad step count: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int cmd_fit(const std::string& config_path, const std::string& out_path) {
  bk::ExperimentConfig cfg = bk::load_experiment_config(config_path);
  if (auto e = env_seed()) cfg.seed = *e;
  if (!cfg.sindy_fm) throw std::invalid_argument("config: fit requires a sindy_fm block");
  if (cfg.latent_file.empty() && cfg.scenarios.empty()) {
    throw std::invalid_argument("config: fit requires a scenario or a latent_file");
  }
  const bk::EndpointSource src =
      cfg.latent_file.empty() ? bk::endpoints_for(cfg.scenarios.front()) : bk::endpoints_for_latent(cfg.latent_file);
  const bk::SymbolicDrift model = bk::train_sindy_fm(src, *cfg.sindy_fm, cfg.n_train_trajectories, cfg.seed);

  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open " + out_path + " for writing");
  os << bk::serialize(model).dump(2) << '\n';

  std::cout << "active " << model.fit_meta.active_count << " of " << model.W.size() << ", training loss "
            << model.fit_meta.training_loss << ", " << model.fit_meta.train_seconds << " s\n";
  for (const auto& line : model.describe()) std::cout << "  " << line << '\n';
  return 0;
}

int cmd_transport(const std::string& model_path, int n, int steps, const std::string& method,
                  std::optional<std::uint64_t> seed_flag, const std::string& out_path) {
  const bk::SymbolicDrift model = bk::deserialize(read_json(model_path));
  const bk::EndpointSource src = model_endpoints(model);
  bk::Rng rng = bk::derive_stream(model_seed(model, seed_flag), 1);
  const bk::Samples X0 = src.sampler->sample_side(bk::Side::source, n, rng);
  bk::IntegratorConfig ic;
  ic.method = bk::parse_integrator(method);
  ic.steps = steps;
  const bk::Samples X1 = bk::transport_samples(model.as_drift(), X0, ic);
  bk::write_samples_csv(out_path, X1);
  const bk::Moments target = src.sampler->marginal(bk::Side::target);
  if (X1.rows() >= 2) {
    std::cout << "w2 " << bk::gaussian_fit_w2(X1, target.mean, target.cov) << '\n';
  }
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& out_flag) {
  bk::ExperimentConfig cfg = bk::load_experiment_config(config_path);
  if (auto e = env_seed()) cfg.seed = *e;
  const std::string out = out_flag.empty() ? cfg.output : out_flag;
  if (out.empty()) throw std::invalid_argument("bench: no output path (pass --out or set output)");
  const auto rows = bk::run_benchmark(cfg);
  bk::emit_report(rows, bk::report_format_for(out), out);
  int failed = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failed;
      report_error("cell_failed", r.scenario + "/" + r.method + ": " + r.error);
    }
  }
  std::cout << rows.size() << " rows (" << failed << " failed) written to " << out << '\n';
  return 0;
}

int cmd_sweep(const std::string& model_path, const std::string& steps_text, int n_eval,
              std::optional<std::uint64_t> seed_flag, const std::string& out_path) {
  const bk::SymbolicDrift model = bk::deserialize(read_json(model_path));
  const bk::EndpointSource src = model_endpoints(model);
  const std::vector<int> steps = parse_steps(steps_text);
  const std::uint64_t seed = model_seed(model, seed_flag);
  const auto euler = bk::convergence_sweep(model.as_drift(), *src.sampler, steps, n_eval, bk::IntegratorMethod::euler, seed);
  const auto rk4 = bk::convergence_sweep(model.as_drift(), *src.sampler, steps, n_eval, bk::IntegratorMethod::rk4, seed);

  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open " + out_path + " for writing");
  os.precision(17);
  os << "steps,w2_euler,w2_rk4\n";
  for (std::size_t i = 0; i < steps.size(); ++i) os << steps[i] << ',' << euler[i].w2 << ',' << rk4[i].w2 << '\n';
  if (!os) throw std::runtime_error("write failed: " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bridgekit: symbolic and neural drift fitting for distribution transport"};
  app.require_subcommand(1);

  std::string config, out, model, method = "euler", steps_text = "5,10,20,50,100,200";
  int n = 10000, steps = 20, n_eval = 10000;
  std::optional<std::uint64_t> seed;

  auto* fit = app.add_subcommand("fit", "fit a symbolic drift for the first scenario of a config");
  fit->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out, "model JSON to write")->required();

  auto* transport = app.add_subcommand("transport", "push fresh source samples through a fitted model");
  transport->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  transport->add_option("--n", n, "number of samples")->required()->check(CLI::PositiveNumber);
  transport->add_option("--steps", steps, "integrator steps")->required()->check(CLI::PositiveNumber);
  transport->add_option("--method", method, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
  transport->add_option("--seed", seed, "sampling seed (BRIDGEKIT_SEED takes precedence)");
  transport->add_option("--out", out, "CSV of transported samples")->required();

  auto* bench = app.add_subcommand("bench", "run the scenario x method grid");
  bench->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out, "report path; .json for JSON, CSV otherwise");

  auto* sweep = app.add_subcommand("sweep", "W2 against integrator step count");
  sweep->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--steps", steps_text, "comma-separated ascending step counts");
  sweep->add_option("--n-eval", n_eval, "evaluation samples")->check(CLI::Range(2, 100000000));
  sweep->add_option("--seed", seed, "evaluation seed (BRIDGEKIT_SEED takes precedence)");
  sweep->add_option("--out", out, "CSV with columns steps,w2_euler,w2_rk4")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (fit->parsed()) return cmd_fit(config, out);
    if (transport->parsed()) return cmd_transport(model, n, steps, method, seed, out);
    if (bench->parsed()) return cmd_bench(config, out);
    if (sweep->parsed()) return cmd_sweep(model, steps_text, n_eval, seed, out);
  } catch (const bk::LatentFormatError& e) {
    report_error("latent_format", e.what());
  } catch (const bk::DimensionError& e) {
    report_error("dimension", e.what());
  } catch (const bk::IntegrationError& e) {
    report_error("integration", e.what());
  } catch (const bk::TrainingDivergedError& e) {
    report_error("training_diverged", e.what());
  } catch (const nlohmann::json::exception& e) {
    report_error("json", e.what());
  } catch (const std::invalid_argument& e) {
    report_error("invalid_argument", e.what());
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
  }
  return 1;
}
