#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "catsnn/config.hpp"
#include "catsnn/dataset.hpp"
#include "catsnn/deploy.hpp"
#include "catsnn/model.hpp"
#include "catsnn/prune.hpp"
#include "catsnn/trainer.hpp"

namespace catsnn {

std::pair<Dataset, Dataset> make_dataset(const PipelineConfig& cfg);

/// Fresh float SNN for the configured architecture.
Model initial_model(const PipelineConfig& cfg, const Shape& input);

struct StageContext {
  const PipelineConfig& cfg;
  const Dataset& train;
  const Dataset& test;
  /// Position of the stage in the schedule (feeds its training seed).
  std::size_t index = 0;
  /// Empty: no files are written.
  std::string out_dir;
  std::ostream* progress = nullptr;
  /// Called after every optimizer step of the training stages.
  StepHook step_hook = {};
};

struct StageResult {
  std::vector<EpochLog> log;
  std::optional<PruneReport> prune;
  std::optional<ProfileReport> profile;
};

/// Apply one stage to `model` in place. A stage that cannot act on the
/// model's current payload raises ContractError naming both. An export whose
/// profile check fails raises ValidationError.
StageResult run_stage(Model& model, const StageConfig& stage, const StageContext& ctx);

struct EvalSummary {
  std::string stage;
  std::string payload;
  std::size_t repeats = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
  double precision_mean = 0.0, recall_mean = 0.0;
  double energy_mj = 0.0;
  double size_mb = 0.0;
  std::size_t params = 0;
  std::size_t max_unique = 0;
  std::vector<double> spike_rates;
};

/// Metrics over `cfg.eval_repeats` passes, each in its own seeded data order.
EvalSummary evaluate(const Model& model, const Dataset& test, const PipelineConfig& cfg, const std::string& label);

struct DeployRow {
  std::string stage;
  DeployMetrics metrics;
};

/// Adds wall-clock latency to an evaluation and forms both DeployRatios.
DeployRow deploy_row(const Model& model, const EvalSummary& eval, const Dataset& test, const PipelineConfig& cfg);

struct PipelineResult {
  Model model;
  std::vector<EpochLog> log;
  std::vector<EvalSummary> evals;  // one per stage
  std::vector<DeployRow> deploy;
  std::optional<PruneReport> prune;
  std::optional<ProfileReport> profile;
};

/// Runs every configured stage. With an out_dir it writes config.ini,
/// per-stage checkpoints, model.csnn, train_log.csv, eval.csv,
/// deploy_report.csv (latency, machine-dependent) and the stage reports.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir = {}, std::ostream* progress = nullptr,
                            bool measure_latency = true);

/// Clustered baseline schedule: non-spiking pretrain, QAT, k-means snap with
/// a short centroid fine-tune and integer centroids, then transfer to LIF.
PipelineConfig clustered_baseline_config(const PipelineConfig& base);
/// Ternary baseline schedule: fp32 pretrain, then trained ternary weights.
PipelineConfig ternary_baseline_config(const PipelineConfig& base);

std::string train_log_csv(const std::vector<EpochLog>& log);
std::string eval_csv(const std::vector<EvalSummary>& evals);
std::string deploy_csv(const std::vector<DeployRow>& rows);
std::string eval_table(const std::vector<EvalSummary>& evals);

/// First stage of `kind` in the schedule, or a built-in default for it.
StageConfig stage_or_default(const PipelineConfig& cfg, StageKind kind);

}  // namespace catsnn
