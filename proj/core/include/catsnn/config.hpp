#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "catsnn/cat.hpp"
#include "catsnn/dataset.hpp"
#include "catsnn/deploy.hpp"
#include "catsnn/model.hpp"
#include "catsnn/prune.hpp"

// Pipeline configuration: an INI file with typed sections. Unknown sections
// and keys are rejected. Comments start with ';'.
//
//   [run]       seed, batch_size
//   [data]      kind = synthetic | idx, plus classes/channels/height/width/
//               noise/train_per_class/test_per_class or the four idx paths
//   [arch]      layers, init_gain
//   [snn]       beta, u_thr, t_steps, surrogate_alpha, readout
//   [cat]       m, bits, beta_commit, quant_mode, codebook_task_grad,
//               reseed_dead_levels
//   [prune]     criterion, ratio, calib_batches
//   [ternary]   threshold_frac
//   [qat]       bits
//   [cluster]   m, bits, finetune_frac
//   [eval]      repeats, latency_batches, size_mode, profile, profile_file,
//               e_mac_pj, e_ac_pj, spike_rate
//   [pipeline]  stages = comma list of stage names
//   [stage.X]   kind, epochs, lr, weight_decay and optional overrides
//               m, bits, ratio, criterion, activation
namespace catsnn {

enum class StageKind { Fp32Train, Qat, Cluster, Cat, FscPrune, Ternary, Finetune, QuantizeCodebook, Export };

std::string to_string(StageKind k);
StageKind parse_stage_kind(const std::string& text);

struct StageConfig {
  std::string name;
  StageKind kind = StageKind::Fp32Train;
  std::size_t epochs = 0;
  double lr = 1e-2;
  double weight_decay = 1e-5;
  std::optional<std::size_t> m;
  std::optional<int> bits;
  std::optional<double> ratio;
  std::optional<Criterion> criterion;
  /// Switch the model's activation before the stage runs.
  std::optional<Activation> activation;
};

struct DataConfig {
  std::string kind = "synthetic";
  SyntheticSpec synthetic;
  std::string train_images, train_labels, test_images, test_labels;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t batch_size = 64;

  DataConfig data;

  std::string arch = "conv:16:3:1:1,lif,avgpool:2,conv:32:3:1:1,lif,avgpool:2,flatten,dense:3";
  double init_gain = 1.0;

  LifConfig lif;
  Readout readout = Readout::Mean;

  std::size_t cat_m = 4;
  int cat_bits = 8;
  double beta_commit = 0.5;
  CodebookQuantMode quant_mode = CodebookQuantMode::UnitRange;
  bool codebook_task_grad = true;
  bool reseed_dead_levels = true;

  Criterion prune_criterion = Criterion::Fsc;
  double prune_ratio = 0.3;
  std::size_t calib_batches = 4;

  double ternary_threshold = 0.05;
  int qat_bits = 8;

  std::size_t cluster_m = 4;
  int cluster_bits = 8;
  /// The cluster stage fine-tunes for ceil(finetune_frac * epochs).
  double cluster_finetune_frac = 0.1;

  std::size_t eval_repeats = 5;
  std::size_t latency_batches = 3;
  SizeMode size_mode = SizeMode::PayloadBits;
  std::string profile = "truenorth-like";
  std::string profile_file;
  EnergyModel energy;

  std::vector<StageConfig> stages;

  /// Headline desk schedule: fp32 -> cat -> fsc-prune -> finetune ->
  /// quantize-codebook -> export.
  static PipelineConfig defaults();
  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::string& path);

  /// Canonical INI text (every key, fixed order); parse(to_ini()) == *this.
  std::string to_ini() const;
  /// FNV-1a 64 over to_ini().
  std::uint64_t hash() const;
  void validate() const;

  Architecture architecture(const Shape& input) const;
  const StageConfig& stage(const std::string& name) const;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace catsnn
