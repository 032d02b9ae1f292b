#pragma once

#include <optional>
#include <string>
#include <vector>

#include "catsnn/dataset.hpp"
#include "catsnn/model.hpp"
#include "catsnn/network.hpp"

// Structured channel pruning for {conv/dense -> LIF} blocks.
//
// The Fisher Spike Contribution of channel c is
//   S_c = (1/N) * sum_{b,t,h,w} delta^2 * y^2
// where y are the layer's output spikes and delta = dL/dy. It is the diagonal
// Fisher surrogate for a multiplicative gate on the channel, with the
// constant factor dropped since only the ranking matters.
namespace catsnn {

enum class Criterion { Fsc, Sca, Magnitude, Oracle };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& text);

struct ChannelSaliency {
  std::size_t layer = 0;  // weight slot
  std::vector<double> scores;
  Criterion criterion = Criterion::Fsc;
  std::size_t calib_batches = 0;
};

/// Running FSC sums across calibration batches; divides by total samples.
class FscAccumulator {
 public:
  void add(const ActivityRecord& rec);
  ChannelSaliency scores(std::size_t layer) const;
  std::size_t samples() const noexcept { return samples_; }
  std::size_t batches() const noexcept { return batches_; }

 private:
  std::vector<double> sums_;
  std::size_t samples_ = 0;
  std::size_t batches_ = 0;
};

ChannelSaliency fsc_scores(const ActivityRecord& rec, std::size_t layer = 0);
/// Mean spike activity per channel over N, T and space.
ChannelSaliency sca_scores(const ActivityRecord& rec, std::size_t layer = 0);
/// L1 norm of each output-channel weight slice.
ChannelSaliency magnitude_scores(const Tensor& layer_weights, std::size_t layer = 0);

/// Exact loss increase on `calib` when channel c of the LIF layer fed by
/// weight slot `layer` is forced to zero.
ChannelSaliency oracle_scores(const Model& model, const Dataset& calib, std::size_t layer);

/// Which samples of `train` form the calibration set (first
/// calib_batches * batch_size samples in a seeded order).
Dataset calibration_set(const Dataset& train, std::size_t calib_batches, std::size_t batch_size, std::uint64_t seed);

/// Scores for every prunable layer, computed on `calib` split into batches.
std::vector<ChannelSaliency> compute_saliency(const Model& model, const Dataset& calib, Criterion criterion,
                                              std::size_t batch_size);

struct LayerPruneRecord {
  std::size_t layer = 0;
  std::size_t channels_before = 0;
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
  std::vector<double> scores;
};

struct PruneReport {
  Criterion criterion = Criterion::Fsc;
  double ratio = 0.0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  std::vector<LayerPruneRecord> layers;

  std::string to_csv() const;
  std::string to_table() const;
};

/// Lowest-scoring floor(ratio * C) channels per scored layer; ties remove the
/// lower index first.
std::vector<std::size_t> select_victims(const std::vector<double>& scores, double ratio);

struct PruneResult {
  Model model;
  PruneReport report;
};

/// Physically remove channels: shrink each layer's output channels and the
/// next weight layer's matching input slices. CAT assignments are re-derived.
PruneResult prune_channels(const Model& model, const std::vector<ChannelSaliency>& saliency, double ratio);

/// Per-LIF-layer 0/1 masks that zero the channels a PruneReport removed.
std::vector<Tensor> removal_masks(const Model& model, const PruneReport& report);

/// Spearman rank correlation with average ranks for ties (0 if either side
/// is constant).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace catsnn
