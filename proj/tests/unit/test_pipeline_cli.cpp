#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "catsnn/model_io.hpp"
#include "catsnn/optim.hpp"
#include "catsnn/pipeline.hpp"
#include "catsnn/trainer.hpp"
#include "cli.hpp"

using namespace catsnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("catsnn_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small, fast schedule on a 3-class 8x8 task.
PipelineConfig small_config() {
  return PipelineConfig::parse(R"([data]
train_per_class = 40
test_per_class = 20
[eval]
repeats = 2
latency_batches = 1
[pipeline]
stages = fp32,cat,prune,finetune,quantize,export
[stage.fp32]
kind = fp32-train
epochs = 3
lr = 0.01
[stage.cat]
kind = cat
epochs = 1
lr = 1e-4
[stage.prune]
kind = fsc-prune
[stage.finetune]
kind = finetune
epochs = 1
lr = 1e-4
[stage.quantize]
kind = quantize-codebook
[stage.export]
kind = export
)");
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = catsnn::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(AdamW, ZeroGradZeroDecayIsIdentity) {
  Tensor p = Tensor::from({1.0, -2.0});
  Tensor g(Shape{2}, 0.0);
  AdamW opt(0.0);
  std::vector<ParamUpdate> ups{{&p, &g, true}};
  for (int i = 0; i < 3; ++i) opt.step(ups, 0.1);
  EXPECT_EQ(p.values(), (std::vector<double>{1.0, -2.0}));
}

TEST(AdamW, DescendsOnSquareAndDecays) {
  Tensor w = Tensor::from({1.0});
  AdamW opt(0.0);
  Tensor g = Tensor::from({2.0});
  std::vector<ParamUpdate> ups{{&w, &g, true}};
  opt.step(ups, 0.1);
  EXPECT_LT(std::abs(w[0]), 1.0);
  EXPECT_NEAR(w[0], 0.9, 1e-6);

  Tensor d = Tensor::from({3.0});
  Tensor zero = Tensor::from({0.0});
  AdamW decay(0.5);
  std::vector<ParamUpdate> du{{&d, &zero, true}};
  decay.step(du, 0.1);
  EXPECT_DOUBLE_EQ(d[0], 3.0 * (1 - 0.1 * 0.5));
  EXPECT_THROW(decay.step(du, 0.0), ContractError);
}

TEST(Cosine, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 10, 0.01), 0.01);
  EXPECT_NEAR(cosine_lr(10, 10, 0.01), 0.0, 1e-18);
  EXPECT_NEAR(cosine_lr(5, 10, 0.01), 0.005, 1e-15);
}

TEST(Trainer, ZeroEpochsIsIdentity) {
  auto cfg = small_config();
  auto [train, test] = make_dataset(cfg);
  Model m = initial_model(cfg, train.sample_shape());
  const auto before = encode_model(m);
  auto log = train_model(m, train, &test, {.epochs = 0}, "noop");
  EXPECT_TRUE(log.empty());
  EXPECT_EQ(encode_model(m), before);
  EXPECT_EQ(train_log_csv(log).find('\n'), train_log_csv(log).size() - 1);  // header only
}

TEST(Trainer, CatStageRespectsCodebookEveryStep) {
  auto cfg = small_config();
  auto [train, test] = make_dataset(cfg);
  Model m = initial_model(cfg, train.sample_shape());
  StageContext ctx{cfg, train, test, 0, {}, nullptr};
  StageConfig cat = cfg.stage("cat");
  cat.epochs = 1;
  run_stage(m, cat, ctx);
  for (const auto& w : m.weights) EXPECT_LE(unique_weight_count(w), 4u);
  std::size_t steps = 0;
  TrainOptions opts{.epochs = 1, .lr = 1e-3, .batch_size = 32};
  train_model(m, train, nullptr, opts, "cat", [&](const Model& mm, std::size_t) {
    ++steps;
    for (const auto& w : mm.weights) ASSERT_LE(unique_weight_count(w), 4u);
  });
  EXPECT_GT(steps, 0u);
}

TEST(Stages, IncompatiblePayloadIsContractError) {
  auto cfg = small_config();
  auto [train, test] = make_dataset(cfg);
  Model m = initial_model(cfg, train.sample_shape());
  StageContext ctx{cfg, train, test, 0, {}, nullptr};
  EXPECT_THROW(run_stage(m, cfg.stage("quantize"), ctx), ContractError);
  m.activation = Activation::Relu;
  EXPECT_THROW(run_stage(m, cfg.stage("prune"), ctx), ContractError);
}

TEST(Evaluate, DeterministicModelHasZeroStd) {
  auto cfg = small_config();
  auto [train, test] = make_dataset(cfg);
  Model m = initial_model(cfg, train.sample_shape());
  auto e = evaluate(m, test, cfg, "init");
  EXPECT_EQ(e.repeats, 2u);
  EXPECT_EQ(e.acc_std, 0.0);
  EXPECT_EQ(e.f1_std, 0.0);
  cfg.eval_repeats = 1;
  auto one = evaluate(m, test, cfg, "init");
  const auto csv = eval_csv({one});
  EXPECT_NE(csv.find(",,"), std::string::npos) << csv;  // std columns left blank
}

TEST(Pipeline, SmallRunWritesOutputs) {
  const auto dir = temp_dir("pipeline");
  auto res = run_pipeline(small_config(), dir.string(), nullptr, false);
  EXPECT_EQ(res.evals.size(), 6u);
  for (const char* f : {"config.ini", "model.csnn", "train_log.csv", "eval.csv", "prune_report.csv",
                        "profile_report.csv", "model.lut", "model.lut.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "deploy_report.csv"));  // latency not measured
  EXPECT_TRUE(res.profile && res.profile->passed());
  EXPECT_LE(max_constrained_unique(res.model), 4u);
  fs::remove_all(dir);
}

TEST(Baselines, ConfigsBuildExpectedSchedules) {
  auto base = small_config();
  auto cl = clustered_baseline_config(base);
  ASSERT_GE(cl.stages.size(), 4u);
  EXPECT_EQ(cl.stages[0].activation, std::optional<Activation>(Activation::Relu));
  EXPECT_EQ(cl.stages[1].kind, StageKind::Qat);
  EXPECT_EQ(cl.stages[2].kind, StageKind::Cluster);
  EXPECT_EQ(cl.stages.back().activation, std::optional<Activation>(Activation::Lif));
  auto tn = ternary_baseline_config(base);
  EXPECT_EQ(tn.stages.back().kind, StageKind::Ternary);
}

TEST(Cli, UnknownSubcommandPrintsUsage) {
  auto r = run_cli({"frobnicate"});
  EXPECT_EQ(r.code, catsnn::cli::kUsageError);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({}).code, catsnn::cli::kUsageError);
  EXPECT_EQ(run_cli({"--help"}).code, catsnn::cli::kOk);
}

TEST(Cli, MissingFilesAreUsageErrors) {
  EXPECT_EQ(run_cli({"eval", "--model", "/nonexistent.csnn"}).code, catsnn::cli::kUsageError);
  EXPECT_EQ(run_cli({"--config", "/nonexistent.ini", "pipeline"}).code, catsnn::cli::kUsageError);
}

TEST(Cli, DeployCheckExportAndReport) {
  const auto dir = temp_dir("cli");
  const auto cfg_path = dir / "small.ini";
  {
    std::ofstream f(cfg_path);
    f << small_config().to_ini();
  }
  auto tr = run_cli({"--config", cfg_path.string(), "--out-dir", dir.string(), "-q", "train", "--epochs", "2"});
  ASSERT_EQ(tr.code, catsnn::cli::kOk) << tr.err;
  const auto fp32 = (dir / "fp32.csnn").string();
  auto fail = run_cli({"--config", cfg_path.string(), "deploy-check", "--model", fp32, "--profile", "truenorth-like"});
  EXPECT_EQ(fail.code, catsnn::cli::kValidationFailed);
  auto refused = run_cli({"--config", cfg_path.string(), "--out-dir", dir.string(), "export-lut", "--model", fp32});
  EXPECT_EQ(refused.code, catsnn::cli::kValidationFailed);

  auto cp = run_cli({"--config", cfg_path.string(), "--out-dir", dir.string(), "-q", "compress", "cat", "--model", fp32,
                 "--epochs", "1", "--bits", "8"});
  ASSERT_EQ(cp.code, catsnn::cli::kOk) << cp.err;
  const auto cat = (dir / "cat.csnn").string();
  auto ok = run_cli({"--config", cfg_path.string(), "deploy-check", "--model", cat, "--profile", "truenorth-like", "--csv"});
  EXPECT_EQ(ok.code, catsnn::cli::kOk) << ok.out;
  auto lut = run_cli({"--config", cfg_path.string(), "--out-dir", dir.string(), "export-lut", "--model", cat});
  EXPECT_EQ(lut.code, catsnn::cli::kOk) << lut.err;
  EXPECT_TRUE(fs::exists(dir / "model.lut"));

  auto dr = run_cli({"--config", cfg_path.string(), "report-dr", "--model", fp32, "--model", cat});
  ASSERT_EQ(dr.code, catsnn::cli::kOk) << dr.err;
  std::size_t lines = 0;
  for (char c : dr.out) lines += c == '\n';
  EXPECT_EQ(lines, 3u) << dr.out;
  EXPECT_EQ(dr.out.rfind("model,payload,", 0), 0u);

  auto pr = run_cli({"--config", cfg_path.string(), "--out-dir", dir.string(), "-q", "prune", "mag", "--model", cat,
                 "--ratio", "0.25"});
  EXPECT_EQ(pr.code, catsnn::cli::kOk) << pr.err;
  EXPECT_NE(slurp(dir / "prune_report.csv").find(",mag,"), std::string::npos);
  fs::remove_all(dir);
}
