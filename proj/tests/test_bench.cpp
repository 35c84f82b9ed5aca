#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "bridgekit/bench.hpp"
#include "bridgekit/latent.hpp"

using namespace bridgekit;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("bk_bench_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os << bytes;
}

Samples float_valued(Eigen::Index n, int d, Rng& rng) {
  std::normal_distribution<double> g;
  Samples X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = static_cast<double>(static_cast<float>(g(rng)));
  return X;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.scenarios = {ScenarioSpec{"identity", 2, 0.5}, ScenarioSpec{"diagonal", 3, 1.0}};
  cfg.methods = {Method::sindy_fm};
  SindyFmSettings s;
  s.time_degree = 2;
  cfg.sindy_fm = s;
  cfg.n_train_trajectories = 2000;
  cfg.n_eval_samples = 500;
  cfg.integrator.steps = 10;
  cfg.seed = 11;
  return cfg;
}

DsbmConfig tiny_dsbm() {
  DsbmConfig d;
  d.imf_iters = 1;
  d.inner_epochs = 2;
  d.n_pairs = 128;
  d.batch_size = 64;
  d.em_steps = 10;
  d.hidden = {8};
  d.n_eval = 200;
  d.pretrain_trajectories = 32;
  d.ddpm_steps = 10;
  d.pretrain_cfg.epochs = 2;
  return d;
}

void expect_same_results(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].scenario, b[i].scenario);
    EXPECT_EQ(a[i].method, b[i].method);
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].active_params, b[i].active_params);
    EXPECT_EQ(std::isnan(a[i].w2), std::isnan(b[i].w2));
    if (!std::isnan(a[i].w2)) EXPECT_EQ(a[i].w2, b[i].w2) << i;
    EXPECT_EQ(a[i].error, b[i].error);
  }
}

}  // namespace

TEST(LatentPairsFile, RoundTripIsBitExact) {
  TempDir tmp;
  Rng rng(1);
  const Samples src = float_valued(17, 8, rng);
  const Samples tgt = float_valued(17, 8, rng);
  write_latent_pairs(tmp.file("p.bklp"), src, tgt);
  const LatentPairs back = ingest_latent_pairs(tmp.file("p.bklp"), 8);
  EXPECT_EQ(back.source(), src);
  EXPECT_EQ(back.target(), tgt);
  EXPECT_EQ(fs::file_size(tmp.file("p.bklp")), 4u + 4u + 4u + 8u + 17u * 2u * 8u * 4u);
}

TEST(LatentPairsFile, HeaderIsLittleEndian) {
  TempDir tmp;
  Samples a(1, 3), b(1, 3);
  a << 1, 2, 3;
  b << -1, -2, -3;
  write_latent_pairs(tmp.file("p.bklp"), a, b);
  const std::string bytes = slurp(tmp.file("p.bklp"));
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 4), "BKLP");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 1u);
  // 1.0f is 0x3f800000.
  EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0x3fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[22]), 0x80u);
}

TEST(LatentPairsFile, EachDefectHasItsOwnError) {
  TempDir tmp;
  Rng rng(2);
  const Samples s = float_valued(4, 3, rng);
  write_latent_pairs(tmp.file("ok.bklp"), s, s);
  const std::string good = slurp(tmp.file("ok.bklp"));

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  spit(tmp.file("magic.bklp"), bad_magic);
  EXPECT_THROW(ingest_latent_pairs(tmp.file("magic.bklp")), LatentMagicError);

  EXPECT_THROW(ingest_latent_pairs(tmp.file("ok.bklp"), 4), LatentDimError);

  spit(tmp.file("short.bklp"), good.substr(0, good.size() - 5));
  EXPECT_THROW(ingest_latent_pairs(tmp.file("short.bklp")), LatentTruncatedError);
  spit(tmp.file("header.bklp"), good.substr(0, 10));
  EXPECT_THROW(ingest_latent_pairs(tmp.file("header.bklp")), LatentTruncatedError);

  std::string zero_dim = good;
  zero_dim[8] = 0;
  spit(tmp.file("zero.bklp"), zero_dim);
  EXPECT_THROW(ingest_latent_pairs(tmp.file("zero.bklp")), LatentDimError);

  spit(tmp.file("trailing.bklp"), good + "x");
  EXPECT_THROW(ingest_latent_pairs(tmp.file("trailing.bklp")), LatentFormatError);

  std::string version = good;
  version[4] = 2;
  spit(tmp.file("version.bklp"), version);
  EXPECT_THROW(ingest_latent_pairs(tmp.file("version.bklp")), LatentFormatError);

  EXPECT_THROW(ingest_latent_pairs(tmp.file("missing.bklp")), std::runtime_error);
}

TEST(LatentPairsFile, TwoPairSamplerYieldsOnlyThosePairs) {
  TempDir tmp;
  Rng rng(3);
  const Samples src = float_valued(2, 8, rng);
  const Samples tgt = float_valued(2, 8, rng);
  write_latent_pairs(tmp.file("p.bklp"), src, tgt);
  const LatentPairs pairs = ingest_latent_pairs(tmp.file("p.bklp"));
  Vector x0(8), x1(8);
  int seen[2] = {0, 0};
  Rng draw(4);
  for (int k = 0; k < 200; ++k) {
    pairs.sample_pair(draw, std::span<double>(x0.data(), 8), std::span<double>(x1.data(), 8));
    const int which = x0 == src.row(0).transpose() ? 0 : 1;
    EXPECT_EQ(x0, src.row(which).transpose());
    EXPECT_EQ(x1, tgt.row(which).transpose());
    ++seen[which];
  }
  EXPECT_GT(seen[0], 0);
  EXPECT_GT(seen[1], 0);
}

TEST(LatentPairsFile, ThreeTimesPerPairTriplesTheRows) {
  TempDir tmp;
  Rng rng(5);
  const Eigen::Index n = 120000;
  write_latent_pairs(tmp.file("big.bklp"), float_valued(n, 2, rng), float_valued(n, 2, rng));
  const LatentPairs pairs = ingest_latent_pairs(tmp.file("big.bklp"));
  EXPECT_EQ(pairs.size(), n);
  const FMDataset ds = build_dataset(pairs, Interpolant{}, static_cast<int>(n), 3, 9);
  EXPECT_EQ(ds.rows(), 360000);
}

TEST(LatentPairsFile, IngestBuildFitIsDeterministic) {
  TempDir tmp;
  Rng rng(6);
  write_latent_pairs(tmp.file("p.bklp"), float_valued(300, 4, rng), float_valued(300, 4, rng));
  ExperimentConfig cfg;
  cfg.latent_file = tmp.file("p.bklp");
  SindyFmSettings s;
  s.time_degree = 1;
  s.points_per_traj = 3;
  const auto run = [&] {
    const EndpointSource src = endpoints_for_latent(cfg.latent_file);
    return serialize(train_sindy_fm(src, s, 1000, 42));
  };
  nlohmann::json a = run(), b = run();
  a["fit_meta"].erase("train_seconds");
  b["fit_meta"].erase("train_seconds");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(LatentPairsFile, BenchmarkRunsOnLatentPairs) {
  TempDir tmp;
  Rng rng(7);
  Samples tgt = float_valued(400, 3, rng);
  tgt.array() += 1.0;
  write_latent_pairs(tmp.file("p.bklp"), float_valued(400, 3, rng), tgt);
  ExperimentConfig cfg = small_config();
  cfg.scenarios.clear();
  cfg.latent_file = tmp.file("p.bklp");
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].error, "");
  EXPECT_EQ(rows[0].dim, 3);
  EXPECT_GE(rows[0].w2, 0.0);
  EXPECT_LT(rows[0].w2, 0.5);
}

TEST(Report, CsvHeaderIsTheFieldList) {
  TempDir tmp;
  emit_report({}, ReportFormat::csv, tmp.file("r.csv"));
  std::string header;
  for (const auto& f : metrics_fields()) header += (header.empty() ? "" : ",") + f;
  EXPECT_EQ(slurp(tmp.file("r.csv")), header + "\n");
  EXPECT_EQ(header,
            "scenario,dim,mean_scale,method,w2,train_seconds,inference_seconds_per_sample,active_params,"
            "integrator,steps,seed,w2_backward,pretrain_seconds,error");
}

TEST(Report, JsonRoundTripsRows) {
  TempDir tmp;
  MetricsRow a;
  a.scenario = "rotated";
  a.dim = 7;
  a.mean_scale = 0.1;
  a.method = "sindy_fm";
  a.w2 = 0.1234567890123456789;
  a.train_seconds = 1.0 / 3.0;
  a.inference_seconds_per_sample = 2.5e-7;
  a.active_params = 29;
  a.integrator = "euler";
  a.steps = 20;
  a.seed = std::numeric_limits<std::uint64_t>::max();
  MetricsRow b = a;
  b.method = "dsbm";
  b.w2_backward = 0.5;
  b.error = "boom, \"quoted\"";
  emit_report({a, b}, ReportFormat::json, tmp.file("r.json"));
  const auto back = read_report_json(tmp.file("r.json"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[0] == a);
  EXPECT_TRUE(back[1] == b);
  EXPECT_TRUE(nlohmann::json::parse(slurp(tmp.file("r.json"))).is_array());
}

TEST(Report, CsvKeepsFullPrecisionAndQuotes) {
  TempDir tmp;
  MetricsRow r;
  r.scenario = "identity";
  r.method = "dsbm";
  r.w2 = 0.1 + 0.2;
  r.error = "a,b";
  emit_report({r}, ReportFormat::csv, tmp.file("r.csv"));
  const std::string text = slurp(tmp.file("r.csv"));
  EXPECT_NE(text.find("0.30000000000000004"), std::string::npos);
  EXPECT_NE(text.find("\"a,b\""), std::string::npos);
  EXPECT_NE(text.find(",nan,"), std::string::npos);  // w2_backward
}

TEST(Report, FormatFromSuffix) {
  EXPECT_EQ(report_format_for("out/r.json"), ReportFormat::json);
  EXPECT_EQ(report_format_for("out/r.csv"), ReportFormat::csv);
  EXPECT_EQ(report_format_for("r"), ReportFormat::csv);
}

TEST(Report, UnwritablePathThrows) {
  EXPECT_THROW(emit_report({}, ReportFormat::csv, "/nonexistent-dir/x/r.csv"), std::runtime_error);
}

TEST(ExperimentConfigTest, MethodWithoutBlockIsRejected) {
  ExperimentConfig cfg = small_config();
  cfg.methods.push_back(Method::dsbm);
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg.dsbm = tiny_dsbm();
  EXPECT_NO_THROW(validate(cfg));
  cfg.n_eval_samples = 1;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(ExperimentConfigTest, JsonRoundTrip) {
  ExperimentConfig cfg = small_config();
  cfg.methods.push_back(Method::dsbm_pretrained);
  cfg.dsbm = tiny_dsbm();
  const ExperimentConfig back = nlohmann::json(cfg).get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back).dump(), nlohmann::json(cfg).dump());
}

TEST(ExperimentConfigTest, ShippedConfigsLoad) {
  for (const auto& entry : fs::directory_iterator(BRIDGEKIT_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_experiment_config(entry.path().string())) << entry.path();
  }
}

TEST(TimeDegree, AutomaticRule) {
  SindyFmSettings s;
  const EndpointSource small = endpoints_for(ScenarioSpec{"identity", 5, 0.1});
  const EndpointSource big = endpoints_for(ScenarioSpec{"identity", 20, 0.1});
  const EndpointSource diag = endpoints_for(ScenarioSpec{"diagonal", 20, 0.1});
  EXPECT_EQ(resolve_time_degree(s, small, 5), 2);
  EXPECT_EQ(resolve_time_degree(s, big, 20), 1);
  EXPECT_EQ(resolve_time_degree(s, diag, 20), 2);
  s.time_degree = 3;
  EXPECT_EQ(resolve_time_degree(s, big, 20), 3);
}

TEST(RunBenchmark, EmptyMethodListGivesEmptyReport) {
  ExperimentConfig cfg = small_config();
  cfg.methods.clear();
  EXPECT_TRUE(run_benchmark(cfg).empty());
}

TEST(RunBenchmark, RowsFollowConfigOrder) {
  ExperimentConfig cfg = small_config();
  cfg.methods = {Method::dsbm, Method::sindy_fm};
  cfg.dsbm = tiny_dsbm();
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 4u);
  const char* expect[4][2] = {{"identity", "dsbm"}, {"identity", "sindy_fm"}, {"diagonal", "dsbm"}, {"diagonal", "sindy_fm"}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].scenario, expect[i][0]);
    EXPECT_EQ(rows[i].method, expect[i][1]);
    EXPECT_EQ(rows[i].seed, derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    EXPECT_EQ(rows[i].error, "");
    EXPECT_GE(rows[i].w2, 0.0);
    EXPECT_GT(rows[i].train_seconds, 0.0);
    EXPECT_GT(rows[i].inference_seconds_per_sample, 0.0);
    EXPECT_GT(rows[i].active_params, 0);
  }
  // One 3-8-2 net: 3*8 + 8 + 8*2 + 2.
  EXPECT_EQ(rows[0].active_params, 50);
}

TEST(RunBenchmark, SameSeedSameResults) {
  ExperimentConfig cfg = small_config();
  cfg.methods = {Method::sindy_fm, Method::dsbm, Method::dsbm_pretrained};
  cfg.dsbm = tiny_dsbm();
  expect_same_results(run_benchmark(cfg), run_benchmark(cfg));
}

TEST(RunBenchmark, UnknownScenarioFailsValidation) {
  ExperimentConfig cfg = small_config();
  cfg.scenarios.insert(cfg.scenarios.begin(), ScenarioSpec{"banana", 2, 0.1});
  EXPECT_THROW(run_benchmark(cfg), std::invalid_argument);
}

TEST(RunBenchmark, FailingCellBecomesErrorRowAndRunContinues) {
  ExperimentConfig cfg = small_config();
  cfg.methods = {Method::dsbm, Method::sindy_fm};
  cfg.dsbm = tiny_dsbm();
  cfg.dsbm->divergence_limit = 1e-12;
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 4u);
  for (int i : {0, 2}) {
    EXPECT_NE(rows[i].error, "");
    EXPECT_TRUE(std::isnan(rows[i].w2));
  }
  for (int i : {1, 3}) {
    EXPECT_EQ(rows[i].error, "");
    EXPECT_GE(rows[i].w2, 0.0);
  }
}

TEST(RunBenchmark, GridShapeMatchesMeansDimsMethods) {
  ExperimentConfig cfg;
  for (double mean : {0.1, 0.5, 1.0})
    for (int d : {2, 3, 4}) cfg.scenarios.push_back(ScenarioSpec{"identity", d, mean});
  cfg.methods = {Method::sindy_fm, Method::dsbm, Method::dsbm_pretrained};
  cfg.sindy_fm = SindyFmSettings{};
  cfg.dsbm = tiny_dsbm();
  cfg.dsbm->imf_iters = 0;
  cfg.dsbm->pretrain_cfg.epochs = 1;
  cfg.n_train_trajectories = 200;
  cfg.n_eval_samples = 50;
  cfg.integrator.steps = 2;
  TempDir tmp;
  emit_report(run_benchmark(cfg), ReportFormat::csv, tmp.file("grid.csv"));
  std::ifstream is(tmp.file("grid.csv"));
  int lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  EXPECT_EQ(lines, 1 + 27);
}

TEST(Sweep, ConstantDriftIsFlat) {
  const GaussianEndpoints ep(make_scenario(ScenarioSpec{"rotated", 3, 1.0}));
  auto drift = [](std::span<const double>, double, std::span<double> out) {
    out[0] = 0.3;
    out[1] = -0.1;
    out[2] = 0.7;
  };
  const auto pts = convergence_sweep(drift, ep, {1, 5, 10, 20, 50, 100, 200}, 2000);
  ASSERT_EQ(pts.size(), 7u);
  for (const auto& p : pts) EXPECT_NEAR(p.w2, pts.front().w2, 1e-10);
}

TEST(Sweep, DecayingDriftConvergesWithSteps) {
  // Source N(0, I), target the exact time-1 flow of xdot = -x: N(0, e^-2 I).
  GaussianPair gp;
  gp.dim = 2;
  gp.mu0 = Vector::Zero(2);
  gp.mu1 = Vector::Zero(2);
  gp.sigma0 = Matrix::Identity(2, 2);
  gp.sigma1 = std::exp(-2.0) * Matrix::Identity(2, 2);
  const GaussianEndpoints ep(gp);
  auto drift = [](std::span<const double> x, double, std::span<double> out) {
    out[0] = -x[0];
    out[1] = -x[1];
  };
  const std::vector<int> steps = {5, 10, 20, 50, 100, 200};
  const auto euler = convergence_sweep(drift, ep, steps, 10000, IntegratorMethod::euler, 3);
  for (std::size_t i = 1; i < euler.size(); ++i) EXPECT_LE(euler[i].w2, euler[i - 1].w2 + 1e-12);
  const auto rk4 = convergence_sweep(drift, ep, steps, 10000, IntegratorMethod::rk4, 3);
  EXPECT_LT(std::abs(rk4[2].w2 - rk4[5].w2), 0.05 * rk4[5].w2);
}

TEST(Sweep, SingleEntryAndValidation) {
  const GaussianEndpoints ep(make_scenario(ScenarioSpec{"identity", 2, 0.1}));
  auto zero = [](std::span<const double>, double, std::span<double> out) {
    out[0] = 0.0;
    out[1] = 0.0;
  };
  EXPECT_EQ(convergence_sweep(zero, ep, {20}, 100).size(), 1u);
  EXPECT_THROW(convergence_sweep(zero, ep, {}, 100), std::invalid_argument);
  EXPECT_THROW(convergence_sweep(zero, ep, {20, 10}, 100), std::invalid_argument);
  EXPECT_THROW(convergence_sweep(zero, ep, {10, 10}, 100), std::invalid_argument);
}

TEST(SamplesCsv, HeaderAndRows) {
  TempDir tmp;
  Samples X(2, 3);
  X << 1, 2, 3, 4, 5, 6.5;
  write_samples_csv(tmp.file("s.csv"), X);
  EXPECT_EQ(slurp(tmp.file("s.csv")), "x1,x2,x3\n1,2,3\n4,5,6.5\n");
}
