#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "doobgen/cli.hpp"
#include "temp_dir.hpp"

using namespace doobgen;

namespace {

RunConfig small_config(const test::TempDir& dir, const std::string& sub) {
  RunConfig cfg;
  cfg.set("out", (dir / sub).string());
  cfg.set("train.iterations", "200");
  cfg.set("train.diagnostic_every", "100");
  cfg.set("train.diagnostic_points", "256");
  return cfg;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old, had_ = true;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (had_) {
      ::setenv(name_.c_str(), old_.c_str(), 1);
    } else {
      ::unsetenv(name_.c_str());
    }
  }

 private:
  std::string name_, old_;
  bool had_ = false;
};

}  // namespace

TEST(CmdTrain, MinimalRunWritesCheckpointAndTraces) {
  test::TempDir dir;
  const auto cfg = small_config(dir, "run");
  cmd_train(cfg);
  for (const char* f : {"model.ckpt", "loss.csv", "score_error.csv", "config.txt", "run.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / ("run/" + std::string(f)))) << f;
  }
  EXPECT_EQ(line_count(read_text(dir / "run/loss.csv")), 201u);
  // iteration 0, 100 and 200
  EXPECT_EQ(line_count(read_text(dir / "run/score_error.csv")), 4u);
  const auto run = nlohmann::json::parse(read_text(dir / "run/run.json"));
  EXPECT_EQ(run["seed"], 0u);
  EXPECT_EQ(run["command"], "train");
  EXPECT_EQ(run["version"], version_string);
  EXPECT_EQ(run["iterations_completed"], 200u);
  const auto net = load_checkpoint((dir / "run/model.ckpt").string());
  EXPECT_EQ(net.input_dim(), 16u);
}

TEST(CmdTrain, ScheduleSettingsAreEchoed) {
  test::TempDir dir;
  auto cfg = small_config(dir, "fns");
  cfg.set("train.iterations", "2");
  cmd_train(cfg);
  const auto echo = read_text(dir / "fns/config.txt");
  EXPECT_NE(echo.find("schedule.kind=linear\n"), std::string::npos);
  EXPECT_NE(echo.find("schedule.reversed=true\n"), std::string::npos);
  RunConfig back;
  back.load_file(dir / "fns/config.txt");
  EXPECT_TRUE(back == cfg);
}

TEST(CmdTrain, RepeatedRunIsByteIdentical) {
  test::TempDir dir;
  cmd_train(small_config(dir, "a"));
  cmd_train(small_config(dir, "b"));
  EXPECT_EQ(read_text(dir / "a/loss.csv"), read_text(dir / "b/loss.csv"));
  EXPECT_EQ(read_text(dir / "a/score_error.csv"), read_text(dir / "b/score_error.csv"));
  EXPECT_EQ(read_text(dir / "a/model.ckpt"), read_text(dir / "b/model.ckpt"));
  auto other = small_config(dir, "c");
  other.set("seed", "1");
  cmd_train(other);
  EXPECT_NE(read_text(dir / "a/loss.csv"), read_text(dir / "c/loss.csv"));
}

TEST(CmdTrain, DatasetSourceSkipsAnalyticDiagnostic) {
  test::TempDir dir;
  auto cfg = small_config(dir, "data");
  cfg.set("process.D", "4");
  cfg.set("train.iterations", "5");
  const auto spec = build_spec(cfg);
  write_matrix_csv(dir / "y.csv", sample_target(build_target(cfg, spec), 50, 3));
  cfg.set("train.data", (dir / "y.csv").string());
  cmd_train(cfg);
  EXPECT_EQ(read_text(dir / "data/score_error.csv"), "iteration,score_error\n");
  cfg.set("process.D", "5");
  EXPECT_THROW(cmd_train(cfg), ConfigError);
}

TEST(CmdTrain, InvalidValuesAreUsageErrors) {
  test::TempDir dir;
  auto cfg = small_config(dir, "bad");
  cfg.set("train.weighting", "uniform");
  EXPECT_THROW(cmd_train(cfg), UsageError);
  cfg = small_config(dir, "bad");
  cfg.set("process.gamma", "1.5");
  EXPECT_THROW(cmd_train(cfg), UsageError);
  cfg = small_config(dir, "bad");
  cfg.set("schedule.kind", "quadratic");
  EXPECT_THROW(cmd_train(cfg), UsageError);
}

TEST(CmdGenerate, AnalyticSamplesHaveRequestedShape) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("out", (dir / "gen").string());
  cfg.set("process.D", "8");
  cfg.set("sampler.n", "100");
  cmd_generate(cfg);
  std::vector<std::string> header;
  const auto x = read_matrix_csv(dir / "gen/samples.csv", &header);
  EXPECT_EQ(x.rows(), 100u);
  EXPECT_EQ(x.cols(), 8u);
  EXPECT_EQ(header.front(), "x1");
}

TEST(CmdGenerate, MetadataRecordsSamplerSettings) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("out", (dir / "gen").string());
  cfg.set("sampler.n", "10");
  cfg.set("sampler.K", "250");
  cfg.set("sampler.L", "50");
  cmd_generate(cfg);
  const auto meta = nlohmann::json::parse(read_text(dir / "gen/samples.json"));
  EXPECT_EQ(meta["iem_steps"], 250u);
  EXPECT_EQ(meta["langevin_steps"], 50u);
  EXPECT_EQ(meta["langevin_step_size"], 0.1);
  EXPECT_EQ(meta["sampler_seed"], derive_seed(0, streams::sampler));
  EXPECT_GE(meta["integrate_seconds"].get<double>(), 0.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "gen/run.json"));
}

TEST(CmdGenerate, MissingCheckpointIsFileError) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("out", (dir / "gen").string());
  cfg.set("sampler.steering", "network");
  cfg.set("sampler.checkpoint", (dir / "absent.ckpt").string());
  EXPECT_THROW(cmd_generate(cfg), FileError);
  cfg.set("sampler.checkpoint", "");
  EXPECT_THROW(cmd_generate(cfg), UsageError);
}

TEST(CmdGenerate, NetworkSteeringFromTrainedCheckpoint) {
  test::TempDir dir;
  auto cfg = small_config(dir, "run");
  cfg.set("train.iterations", "3");
  cmd_train(cfg);
  cfg.set("sampler.steering", "network");
  cfg.set("sampler.checkpoint", (dir / "run/model.ckpt").string());
  cfg.set("sampler.n", "20");
  cmd_generate(cfg);
  EXPECT_EQ(read_matrix_csv(dir / "run/samples.csv").rows(), 20u);

  cfg.set("process.D", "8");
  EXPECT_THROW(cmd_generate(cfg), ConfigError);
}

TEST(CmdEvaluate, MetricsDependOnlyOnFilesAndSeed) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("out", (dir / "ev").string());
  cfg.set("sampler.n", "500");
  cfg.set("eval.reference_n", "500");
  cmd_generate(cfg);
  cmd_evaluate(cfg);
  const auto first = read_text(dir / "ev/metrics.csv");
  std::filesystem::copy_file(dir / "ev/samples.csv", dir / "copy.csv");
  RunConfig again;
  again.set("out", (dir / "ev2").string());
  again.set("eval.samples", (dir / "copy.csv").string());
  again.set("eval.reference_n", "500");
  cmd_evaluate(again);
  EXPECT_EQ(first, read_text(dir / "ev2/metrics.csv"));

  const auto m = read_matrix_csv(dir / "ev/metrics.csv");
  EXPECT_EQ(m(0, 0), 500.0);
  EXPECT_GT(m(0, 1), 0.0);                 // sw
  EXPECT_TRUE(std::isnan(m(0, 7)));        // no checkpoint, no score error
}

TEST(CmdEvaluate, ScoreErrorWithCheckpoint) {
  test::TempDir dir;
  auto cfg = small_config(dir, "run");
  cfg.set("train.iterations", "2");
  cmd_train(cfg);
  cfg.set("sampler.n", "50");
  cfg.set("eval.reference_n", "50");
  cfg.set("eval.checkpoint", (dir / "run/model.ckpt").string());
  cmd_generate(cfg);
  cmd_evaluate(cfg);
  const auto m = read_matrix_csv(dir / "run/metrics.csv");
  EXPECT_GT(m(0, 7), 0.0);
  EXPECT_GT(m(0, 8), 0.0);
}

TEST(CmdEvaluate, DimensionMismatchAndMissingSamples) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("out", (dir / "ev").string());
  EXPECT_THROW(cmd_evaluate(cfg), FileError);
  cfg.set("process.D", "4");
  cfg.set("sampler.n", "10");
  cmd_generate(cfg);
  cfg.set("process.D", "5");
  EXPECT_THROW(cmd_evaluate(cfg), ConfigError);
}

TEST(CmdSimulate, WritesEachKind) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("out", (dir / "sim").string());
  cfg.set("process.D", "4");
  cfg.set("simulate.n", "7");
  cfg.set("simulate.steps", "5");
  cmd_simulate(cfg);
  EXPECT_EQ(read_matrix_csv(dir / "sim/samples.csv").rows(), 7u);
  cfg.set("simulate.kind", "forward");
  cmd_simulate(cfg);
  const auto fwd = read_matrix_csv(dir / "sim/forward.csv");
  EXPECT_EQ(fwd.rows(), 35u);
  EXPECT_EQ(fwd.cols(), 6u);
  EXPECT_DOUBLE_EQ(fwd(4, 1), 0.2);  // forward grid ends at T
  cfg.set("simulate.kind", "bridge");
  cmd_simulate(cfg);
  const auto br = read_matrix_csv(dir / "sim/bridge.csv");
  EXPECT_EQ(br.rows(), 35u);
  for (std::size_t i = 0; i < br.rows(); ++i) EXPECT_LT(br(i, 1), 0.2);
  cfg.set("simulate.kind", "backward");
  EXPECT_THROW(cmd_simulate(cfg), UsageError);
}

TEST(Sweep, GridOrderAndDerivedSeeds) {
  RunConfig cfg;
  cfg.set("sweep.T", "1,0.2");
  cfg.set("sweep.schedule", "fcn,fns");
  const auto cells = sweep_grid(cfg);
  ASSERT_EQ(cells.size(), 4u);
  const std::vector<std::pair<std::string, std::string>> expect = {
      {"1", "fcn"}, {"1", "fns"}, {"0.2", "fcn"}, {"0.2", "fns"}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cells[i].labels[1], expect[i].first);
    EXPECT_EQ(cells[i].labels[4], expect[i].second);
    EXPECT_EQ(cells[i].config.get("process.T"), expect[i].first);
    EXPECT_EQ(cells[i].config.get("schedule.kind"), expect[i].second == "fcn" ? "constant" : "linear");
    EXPECT_EQ(cells[i].config.get_uint("seed"), derive_seed(derive_seed(0, streams::sweep), i));
    EXPECT_EQ(cells[i].labels[0], "16");
  }
}

TEST(Sweep, EmptyGridIsUsageError) {
  RunConfig cfg;
  EXPECT_THROW(sweep_grid(cfg), UsageError);
  EXPECT_THROW(cmd_sweep(cfg), UsageError);
  cfg.set("sweep.schedule", "fcn,vp");
  EXPECT_THROW(sweep_grid(cfg), UsageError);
}

TEST(Sweep, FourCellTableIndependentOfWorkerCount) {
  test::TempDir dir;
  RunConfig cfg;
  cfg.set("sweep.T", "1,0.2");
  cfg.set("sweep.schedule", "fcn,fns");
  cfg.set("sampler.n", "200");
  cfg.set("sampler.K", "50");
  cfg.set("eval.reference_n", "200");
  cfg.set("eval.score_points", "64");
  auto strip_wall = [](const Matrix& m) {
    Matrix out(m.rows(), m.cols() - 1);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j + 1 < m.cols(); ++j) out(i, j) = m(i, j);
    }
    return out;
  };
  Matrix tables[2];
  const char* threads[2] = {"1", "3"};
  for (int k = 0; k < 2; ++k) {
    ScopedEnv env("DOOBGEN_THREADS", threads[k]);
    cfg.set("out", (dir / ("s" + std::to_string(k))).string());
    cmd_sweep(cfg);
    // schedule labels are text; drop that column before parsing
    const auto text = read_text(dir / ("s" + std::to_string(k) + "/sweep.csv"));
    std::string numeric;
    for (const auto& line : split(text, '\n')) {
      if (line.empty()) continue;
      auto cells = split(line);
      cells.erase(cells.begin() + 5);
      numeric += join(cells) + "\n";
    }
    write_text(dir / "numeric.csv", numeric);
    tables[k] = strip_wall(read_matrix_csv(dir / "numeric.csv"));
  }
  ASSERT_EQ(tables[0].rows(), 4u);
  EXPECT_TRUE(tables[0] == tables[1]);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(tables[0](i, 0), static_cast<double>(i));
    EXPECT_EQ(tables[0](i, 12), 0.0);  // analytic steering has no score error
  }
}

TEST(Sweep, InvalidThreadCountIsUsageError) {
  ScopedEnv env("DOOBGEN_THREADS", "zero");
  EXPECT_THROW(worker_count(4), UsageError);
}

TEST(Sweep, ThreadCountIsCapped) {
  ScopedEnv env("DOOBGEN_THREADS", "8");
  EXPECT_EQ(worker_count(3), 3u);
  EXPECT_EQ(worker_count(20), 8u);
}

namespace {

int run_cli(const std::string& args) {
  const int status = std::system((std::string(DOOBGEN_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Executable, ExitCodes) {
  test::TempDir dir;
  const auto out = (dir / "x").string();
  EXPECT_EQ(run_cli("generate --out=" + out + " --process.D=4 --sampler.n=5"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "x/samples.csv"));
  EXPECT_EQ(run_cli("generate --out=" + out + " --process.dims=4"), 2);
  EXPECT_EQ(run_cli("sweep --out=" + out), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("generate --out=" + out + " --sampler.steering=network --sampler.checkpoint=" + out + "/none"), 1);
  write_text(dir / "run.cfg", "process.D=3\nsampler.n=4\nbogus=1\n");
  EXPECT_EQ(run_cli("generate --out=" + out + " --config " + (dir / "run.cfg").string()), 2);
  write_text(dir / "run.cfg", "process.D=3\nsampler.n=4\n");
  EXPECT_EQ(run_cli("generate --out=" + out + " --config " + (dir / "run.cfg").string() + " --sampler.n=6"), 0);
  EXPECT_EQ(read_matrix_csv(dir / "x/samples.csv").rows(), 6u);
  EXPECT_EQ(read_matrix_csv(dir / "x/samples.csv").cols(), 3u);
}
