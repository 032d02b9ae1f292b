#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "catsnn/cat.hpp"
#include "catsnn/snn.hpp"

namespace catsnn {

enum class LayerKind { Conv, Dense, Lif, AvgPool, Flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::Lif;
  std::size_t out = 0;     // conv output channels / dense output features
  std::size_t kernel = 0;  // conv kernel size / pooling window
  std::size_t stride = 1;
  std::size_t pad = 0;

  bool has_weights() const noexcept { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
};

/// Static layer sequence applied per timestep. Text form:
/// "conv:16:3:1:1,lif,avgpool:2,conv:32:3:1:1,lif,avgpool:2,flatten,dense:3"
/// (conv:out:kernel:stride:pad, dense:out, avgpool:window).
struct Architecture {
  Shape input;  // C x H x W
  std::vector<LayerSpec> layers;

  static Architecture parse(const std::string& text, Shape input);
  std::string to_text() const;
  /// Per-sample activation shape after every layer.
  std::vector<Shape> activation_shapes() const;
  void validate() const;
  bool operator==(const Architecture&) const;
};

enum class Activation {
  Lif,        ///< hard spikes, surrogate backward
  LifSmooth,  ///< smooth arctangent spikes in both passes
  Relu,       ///< non-spiking twin used for ANN pretraining (single step)
};
enum class Readout { Mean, Sum };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);
std::string to_string(Readout r);
Readout parse_readout(const std::string& text);

// Per-layer weight payloads.
struct FloatPayload {};
struct QatPayload {
  int bits = 8;
};
struct CatPayload {
  Codebook codebook;
  std::vector<std::int32_t> assignment;
};
struct ClusterPayload {
  std::vector<double> centroids;
  std::vector<std::int32_t> assignment;
  int bits = 8;
};
struct TernaryPayload {
  double w_pos = 1.0;
  double w_neg = 1.0;
  double threshold_frac = 0.05;
};
using Payload = std::variant<FloatPayload, QatPayload, CatPayload, ClusterPayload, TernaryPayload>;

std::string payload_name(const Payload& p);

struct WeightLayer {
  std::size_t layer_index = 0;  // position in Architecture::layers
  Tensor latent;                // Cout x Cin x kh x kw or out x in
  Payload payload;
};

struct Model {
  Architecture arch;
  LifConfig lif;
  Activation activation = Activation::Lif;
  Readout readout = Readout::Mean;
  std::vector<WeightLayer> weights;
  std::vector<std::string> provenance;
  std::uint64_t config_hash = 0;

  std::size_t parameter_count() const;
  /// Weight-layer indices whose outputs feed a LIF layer (prunable).
  std::vector<std::size_t> spiking_weight_layers() const;
  /// Index into `weights` for the layer at architecture position `layer_index`.
  std::size_t weight_slot(std::size_t layer_index) const;
  std::size_t num_lif_layers() const;
  std::size_t classes() const;
};

/// Weight tensor shape implied by the architecture for layer `layer_index`.
Shape weight_shape(const Architecture& arch, std::size_t layer_index);

/// Fresh FP model with Kaiming-style normal init.
Model init_model(const Architecture& arch, const LifConfig& lif, std::uint64_t seed, double init_gain = 1.0);

/// Effective (deployed) weights of one layer, evaluated without a graph.
Tensor effective_weights(const WeightLayer& layer);

/// Number of distinct effective weight values of a layer.
std::size_t unique_weight_count(const WeightLayer& layer);

/// Nominal bits per weight of a payload: 32 for unconstrained floats, the
/// codebook/QAT bit-width otherwise, 2 for ternary.
int payload_bitwidth(const WeightLayer& layer);

}  // namespace catsnn
