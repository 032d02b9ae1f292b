#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "catsnn/dataset.hpp"
#include "catsnn/model.hpp"

namespace catsnn {

struct TrainOptions {
  std::size_t epochs = 0;
  double lr = 1e-2;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;
  double beta_commit = 0.5;
  bool codebook_task_grad = true;
  bool reseed_dead_levels = true;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::string stage;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  /// Largest distinct effective-value count over constrained (non-float) layers.
  std::size_t max_unique = 0;
};

/// Called after every optimizer step with the updated model.
using StepHook = std::function<void(const Model&, std::size_t step)>;

/// AdamW + per-epoch cosine schedule over `opts.epochs`; CAT layers add
/// beta_commit times their commitment loss to the task loss.
std::vector<EpochLog> train_model(Model& model, const Dataset& train, const Dataset* test, const TrainOptions& opts,
                                  const std::string& stage, const StepHook& hook = {});

std::vector<int> predict(const Model& model, const Dataset& data, std::size_t batch_size = 256);
double accuracy(const Model& model, const Dataset& data, std::size_t batch_size = 256);

/// Mean cross-entropy over `data`, optionally with LIF channel masks.
double dataset_loss(const Model& model, const Dataset& data, const std::vector<Tensor>* channel_masks = nullptr,
                    std::size_t batch_size = 256);

/// Largest distinct effective-value count over non-float layers (0 if none).
std::size_t max_constrained_unique(const Model& model);

}  // namespace catsnn
