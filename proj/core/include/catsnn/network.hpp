#pragma once

#include <optional>
#include <vector>

#include "catsnn/model.hpp"

namespace catsnn {

/// Trainable tensor exposed by a bound model.
struct ParamSlot {
  enum class Role { Latent, Levels, Centroids, PosScale, NegScale };
  std::size_t weight_slot = 0;
  Role role = Role::Latent;
  Var leaf;
  /// Decoupled weight decay applies (latent weights only).
  bool decay = true;
};

struct BindOptions {
  bool trainable = true;
  /// CAT levels also receive the task gradient through the snapped read.
  bool codebook_task_grad = true;
};

struct WeightBinding {
  std::vector<Var> effective;  // one per weight layer
  std::vector<ParamSlot> params;
  /// Sum over CAT layers of the per-layer commitment loss, if any CAT layer.
  std::optional<Var> commitment;
};

/// Put every weight layer on the graph. CAT assignments are recomputed from
/// the current latents and written back into the model.
WeightBinding bind_weights(Graph& g, Model& model, const BindOptions& opts = {});
/// Read-only binding for inference (no grads, assignments left untouched).
WeightBinding bind_weights_const(Graph& g, const Model& model);

/// Copy one updated parameter back into the model.
void write_param(Model& model, const ParamSlot& slot, const Tensor& value);
Tensor read_param(const Model& model, const ParamSlot& slot);

struct ForwardOptions {
  bool record_activity = false;
  /// Per LIF layer (in order) multiplicative channel mask applied to the
  /// spikes that leave the layer; the layer's own reset is unaffected.
  const std::vector<Tensor>* channel_masks = nullptr;
  /// Same as masks but as graph variables (for gate-gradient checks).
  const std::vector<Var>* gates = nullptr;
};

struct ForwardTrace {
  Var logits;
  /// [lif layer][t] spikes emitted at step t (values in {0,1} for hard mode).
  std::vector<std::vector<Var>> spikes;
  /// [lif layer][t] node carrying the spikes downstream; its gradient is the
  /// delta used by saliency criteria.
  std::vector<std::vector<Var>> outputs;
};

/// Timesteps the model runs for (1 for the non-spiking twin).
std::size_t model_steps(const Model& model);

/// Run the layer sequence per timestep over x_seq[N x T x C x H x W];
/// logits are the mean (or sum) over T of the per-step head outputs.
ForwardTrace unroll_network(Graph& g, const Model& model, const std::vector<Var>& weights, const Tensor& x_seq,
                            const ForwardOptions& opts = {});

/// x[N x C x H x W] replicated over model_steps(model).
ForwardTrace forward(Graph& g, const Model& model, const std::vector<Var>& weights, const Tensor& x,
                     const ForwardOptions& opts = {});

/// Inference-only logits.
Tensor predict_logits(const Model& model, const Tensor& x, const std::vector<Tensor>* channel_masks = nullptr);
std::vector<int> argmax_rows(const Tensor& logits);

/// Post-LIF spikes and (after backward) their loss gradient for one layer,
/// both shaped N x T x (per-sample activation shape).
struct ActivityRecord {
  Tensor y;
  std::optional<Tensor> delta;
};

std::vector<ActivityRecord> collect_activity(const Graph& g, const ForwardTrace& trace, bool with_delta);

}  // namespace catsnn
