#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "redssl/data/dataset.hpp"
#include "redssl/error.hpp"
#include "redssl/model/mlp.hpp"
#include "redssl/probes/probes.hpp"
#include "redssl/runner/cli.hpp"
#include "redssl/runner/config.hpp"
#include "redssl/runner/grad_suite.hpp"
#include "redssl/runner/training.hpp"

namespace {

using namespace redssl::runner;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class RunnerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("redssl_runner_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
  };
  static CliResult cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = cli_dispatch(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }
  fs::path dir_;
};

// Small but real: 100 samples per class, a few epochs.
TrainConfig small_config(std::vector<std::string> extra = {}) {
  std::vector<std::string> sets{"data.samples_per_class=100", "batch_size=64", "epochs=3", "eval_every=1"};
  sets.insert(sets.end(), extra.begin(), extra.end());
  return parse_config("{}", sets);
}

// ---- config ----------------------------------------------------------------------

TEST(Config, DefaultsMatchTheReferenceSetup) {
  const TrainConfig c = parse_config("{}", {}, 0);
  EXPECT_EQ(c.model.encoder_layers, (std::vector<std::size_t>{10, 10, 10}));
  EXPECT_EQ(c.model.projector_layers, (std::vector<std::size_t>{2}));
  EXPECT_EQ(c.epochs, 200u);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.loss.tau, 0.5);
  EXPECT_EQ(c.loss.eta, 20.0);
  EXPECT_EQ(c.loss.k_percent, 95.0);
  EXPECT_FALSE(c.loss.red_enabled);
  EXPECT_EQ(c.sigma_eps, 0.1);
}

TEST(Config, TauDefaultDependsOnMethod) {
  EXPECT_EQ(parse_config(R"({"loss": {"method": "noncontrastive"}})").loss.tau, 1.0);
  EXPECT_EQ(parse_config(R"({"loss": {"method": "noncontrastive", "tau": 0.2}})").loss.tau, 0.2);
}

TEST(Config, OverridesApplyAfterTheDocument) {
  const TrainConfig c = parse_config(R"({"epochs": 7, "loss": {"eta": 3}})",
                                     {"epochs=9", "loss.red=true", "model.encoder_layers=[4,4]", "output_dir=out"});
  EXPECT_EQ(c.epochs, 9u);
  EXPECT_TRUE(c.loss.red_enabled);
  EXPECT_EQ(c.loss.eta, 3.0);
  EXPECT_EQ(c.model.encoder_layers, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(c.output_dir, "out");
}

TEST(Config, RejectsUnknownFieldsAndBadValues) {
  EXPECT_THROW(parse_config(R"({"epoch": 3})"), redssl::ConfigError);
  EXPECT_THROW(parse_config(R"({"loss": {"temperature": 3}})"), redssl::ConfigError);
  EXPECT_THROW(parse_config("{}", {"loss.nope=1"}), redssl::ConfigError);
  EXPECT_THROW(parse_config("{}", {"epochs"}), redssl::ConfigError);
  EXPECT_THROW(parse_config(R"({"version": 2})"), redssl::ConfigError);
  EXPECT_THROW(parse_config(R"({"epochs": -1})"), redssl::ConfigError);
  EXPECT_THROW(parse_config(R"({"loss": {"method": "byol"}})"), redssl::ConfigError);
  EXPECT_THROW(parse_config("{not json"), redssl::ConfigError);
}

TEST(Config, CanonicalFormRoundTrips) {
  const TrainConfig c = parse_config("{}", {"seed=4", "loss.red=true", "optimizer.kind=\"sgd\"", "model.bias=false"});
  const std::string text = config_to_string(c);
  EXPECT_EQ(config_to_string(parse_config(text)), text);
  EXPECT_EQ(nlohmann::json::parse(text).at("version"), kConfigVersion);
}

TEST(Config, SeedFallsBackToEnvironment) {
  ::setenv("RED_SSL_SEED", "31", 1);
  EXPECT_EQ(default_config().seed, 31u);
  EXPECT_EQ(default_config({"seed=2"}).seed, 2u);
  ::setenv("RED_SSL_SEED", "abc", 1);
  EXPECT_THROW(default_config(), redssl::ConfigError);
  ::unsetenv("RED_SSL_SEED");
  EXPECT_EQ(default_config().seed, 0u);
}

TEST_F(RunnerTest, MissingConfigFileNamesThePath) {
  const std::string path = (dir_ / "missing.json").string();
  EXPECT_THROW(load_config(path), redssl::ConfigError);
  const CliResult r = cli({"train", "--config", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(path), std::string::npos) << r.err;
}

// ---- training ----------------------------------------------------------------------

TEST(Training, ZeroLearningRateKeepsParameters) {
  TrainConfig c = small_config({"epochs=1", "optimizer.lr=0"});
  const TrainResult r = run_training(c);
  const auto a = r.initial.parameters();
  const auto b = r.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST_F(RunnerTest, TrainingIsBitwiseDeterministic) {
  TrainConfig c = small_config({"loss.red=true"});
  c.output_dir = (dir_ / "a").string();
  run_training(c);
  c.output_dir = (dir_ / "b").string();
  run_training(c);
  for (const char* f : {"checkpoint.json", "metrics.jsonl"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  std::istringstream lines(slurp(dir_ / "a" / "metrics.jsonl"));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch"), ++count);
    EXPECT_FALSE(j.contains("elapsed_seconds"));
  }
  EXPECT_EQ(count, 3);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "timing.jsonl"));
}

TEST(Training, LogsAtEvalIntervalAndFinalEpoch) {
  const TrainResult r = run_training(small_config({"epochs=5", "eval_every=2"}));
  std::vector<std::size_t> epochs;
  for (const auto& m : r.log) epochs.push_back(m.epoch);
  EXPECT_EQ(epochs, (std::vector<std::size_t>{2, 4, 5}));
}

TEST(Training, RedLogsWeightTerm) {
  const TrainResult plain = run_training(small_config({"epochs=1"}));
  const TrainResult red = run_training(small_config({"epochs=1", "loss.red=true"}));
  EXPECT_EQ(plain.log.back().weight_term, 0.0);
  // -log w lies in [-1/eta, 1/eta]
  EXPECT_NE(red.log.back().weight_term, 0.0);
  EXPECT_LE(std::abs(red.log.back().weight_term), 1.0 / 20.0);
}

TEST(Training, OtherMethodsRun) {
  const TrainResult moco =
      run_training(small_config({"epochs=2", "loss.method=\"infonce_momentum_queue\"", "queue_capacity=100"}));
  ASSERT_TRUE(moco.model.queue.has_value());
  EXPECT_EQ(moco.model.queue->size(), 100u);
  ASSERT_TRUE(moco.model.momentum.has_value());
  EXPECT_NE(moco.model.momentum->encoder[0].weight, moco.model.online.encoder[0].weight);

  const TrainResult simsiam = run_training(
      small_config({"epochs=2", "loss.method=\"noncontrastive\"", "model.predictor_layers=[4,2]", "loss.red=true"}));
  EXPECT_TRUE(std::isfinite(simsiam.log.back().loss));
  const TrainResult sgd = run_training(small_config({"epochs=2", "optimizer.kind=\"sgd\"", "optimizer.lr=0.01"}));
  EXPECT_TRUE(std::isfinite(sgd.log.back().loss));
}

TEST(Training, BatchLargerThanTrainingSplitIsRejected) {
  EXPECT_THROW(run_training(small_config({"batch_size=1000"})), redssl::ConfigError);
  EXPECT_THROW(run_training(small_config({"model.input_dim=3"})), redssl::ConfigError);
}

TEST(Training, TrainedBeatsUntrainedOnEverySeed) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TrainConfig c = parse_config("{}", {"seed=" + std::to_string(seed), "epochs=3"});
    const TrainResult r = run_training(c);
    const double before = representation_knn(r.initial, r.data, c.knn_k);
    EXPECT_GT(r.log.back().knn_accuracy, before) << "seed " << seed;
  }
}

TEST(Training, HalfTurnHurtsMoreThanTrainingNoise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TrainConfig c = parse_config("{}", {"seed=" + std::to_string(seed), "epochs=3"});
    const TrainResult r = run_training(c);
    redssl::data::Dataset centered = r.data.holdout;
    centered.points.rowwise() -= centered.points.colwise().mean();
    const auto rows = redssl::probes::augmentation_robustness(
        r.model, centered,
        {redssl::data::Augmentation::parse("rotate2d:180"), redssl::data::Augmentation::parse("noise:0.1")}, seed);
    EXPECT_LT(rows[0].representation_cosine, rows[1].representation_cosine) << "seed " << seed;
  }
}

// ---- probing -----------------------------------------------------------------------

TEST_F(RunnerTest, ProbeTwiceGivesIdenticalReports) {
  TrainConfig c = small_config();
  c.output_dir = (dir_ / "run").string();
  run_training(c);
  const std::string ckpt = (dir_ / "run" / "checkpoint.json").string();
  const std::vector<std::string> sets{"data.samples_per_class=100", "batch_size=64", "epochs=3"};
  for (const char* out : {"p1", "p2"}) {
    std::vector<std::string> args{"probe", "--checkpoint", ckpt, "--out", (dir_ / out).string(), "--bandwidth", "0.3"};
    args.push_back("--set");
    args.insert(args.end(), sets.begin(), sets.end());
    const CliResult r = cli(args);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(dir_ / "p1" / "report.json"), slurp(dir_ / "p2" / "report.json"));
}

TEST_F(RunnerTest, ProbeOfUntrainedModelWithIdenticalViews) {
  const TrainConfig c = small_config({"sigma_eps=0"});
  const auto model = redssl::model::init_model(c.model, 0);
  redssl::model::save_checkpoint(model, dir_ / "init.json");
  ProbeRunOptions opt;
  opt.settings = probe_settings_for(c);
  const auto report = run_probe(dir_ / "init.json", c, opt);
  const SplitData d = prepare_data(c);
  const auto e = redssl::model::embed(model, d.holdout.points);
  bool dead = false;
  for (const auto& layer : e.layers) dead = dead || layer.rowwise().norm().minCoeff() == 0.0;
  if (!dead) {
    for (const auto& l : report.layerwise.layers) EXPECT_NEAR(l.alignment, 1.0 / c.loss.tau, 1e-12);
  }
  EXPECT_LE(report.layerwise.representation.alignment, 1.0 / c.loss.tau + 1e-12);
}

TEST_F(RunnerTest, ProbeRejectsMismatchedSpec) {
  const TrainConfig c = small_config();
  redssl::model::MlpSpec other = c.model;
  other.encoder_layers = {5};
  redssl::model::save_checkpoint(redssl::model::init_model(other, 0), dir_ / "other.json");
  EXPECT_THROW(run_probe(dir_ / "other.json", c, {}), redssl::ConfigError);
}

// ---- command line ----------------------------------------------------------------------

TEST_F(RunnerTest, SimulateWritesThreeClasses) {
  const std::string out = (dir_ / "d.csv").string();
  const CliResult r = cli({"simulate", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ds = redssl::data::load_csv(out);
  EXPECT_EQ(ds.num_classes(), 3);
  EXPECT_EQ(ds.size(), 3000u);
}

TEST_F(RunnerTest, TrainFromSimulatedCsv) {
  const std::string csv = (dir_ / "d.csv").string();
  ASSERT_EQ(cli({"simulate", "--out", csv, "--set", "data.samples_per_class=60"}).code, 0);
  const CliResult r = cli({"train", "--out", (dir_ / "run").string(), "--set", "data.source=\"csv\"",
                           "data.path=" + csv, "epochs=2", "batch_size=32"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint.json"));
}

TEST_F(RunnerTest, GradCheckPassesAndPrintsMaximum) {
  const CliResult r = cli({"grad-check"});
  EXPECT_EQ(r.code, 0) << r.out;
  const auto pos = r.out.find("max relative error: ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 20)), 1e-4);
}

TEST_F(RunnerTest, ExportThenEvalReproducesKnn) {
  TrainConfig c = small_config();
  c.output_dir = (dir_ / "run").string();
  const TrainResult trained = run_training(c);
  const std::vector<std::string> sets{"--set", "data.samples_per_class=100", "batch_size=64", "epochs=3"};
  std::vector<std::string> args{"export-embeddings", "--checkpoint", (dir_ / "run" / "checkpoint.json").string(),
                                "--out", (dir_ / "emb").string()};
  args.insert(args.end(), sets.begin(), sets.end());
  ASSERT_EQ(cli(args).code, 0);
  const CliResult r = cli({"eval", "--train", (dir_ / "emb" / "representation_train.csv").string(), "--test",
                           (dir_ / "emb" / "representation_holdout.csv").string(), "--k", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pos = r.out.find("knn_accuracy ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_DOUBLE_EQ(std::stod(r.out.substr(pos + 13)), trained.log.back().knn_accuracy);
}

TEST_F(RunnerTest, UsageErrorsExitOne) {
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"simulate"}).code, 1);
  EXPECT_EQ(cli({"train", "--set", "bogus=1"}).code, 1);
  EXPECT_EQ(cli({"grid", "--eta", "1,x"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(RunnerTest, RuntimeErrorsExitTwo) {
  const CliResult r = cli({"eval", "--train", (dir_ / "none.csv").string(), "--test", (dir_ / "none.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("none.csv"), std::string::npos);
}

TEST(GradSuite, AllChecksPass) {
  const GradSuiteResult r = run_grad_suite(5, 8);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-4);
  std::set<std::string> names;
  for (const auto& e : r.entries) {
    names.insert(e.name);
    EXPECT_GT(e.checked, 0u) << e.name;
  }
  for (const char* n : {"matmul", "percentile_select", "stop_gradient", "info_nce", "red_info_nce_model"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
}

}  // namespace
