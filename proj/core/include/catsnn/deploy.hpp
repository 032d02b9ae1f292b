#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "catsnn/dataset.hpp"
#include "catsnn/model.hpp"

namespace catsnn {

// ---- classification -------------------------------------------------------

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Macro averages over k classes. A 0/0 ratio (class never predicted or
/// never present) counts as 0 in the mean.
ClassificationMetrics classification_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                             std::size_t k_classes);

// ---- DeployRatio components -------------------------------------------------

struct EnergyModel {
  double e_mac_pj = 4.6;
  double e_ac_pj = 0.9;
  double spike_rate = 0.2;
  std::size_t timesteps = 4;

  void validate() const;
};

/// Synaptic operations of one weight layer for a single input at one step.
struct LayerOps {
  std::size_t weight_slot = 0;
  std::size_t ops = 0;
  /// Input arrives as spikes (accumulate) rather than real values (MAC).
  bool spiking_input = false;
  /// LIF ordinal whose spikes feed the layer, when spiking_input.
  std::size_t source_lif = 0;
};

std::vector<LayerOps> layer_op_counts(const Model& model);

/// Mean firing rate of every LIF layer on `x`.
std::vector<double> measure_spike_rates(const Model& model, const Tensor& x);

/// Millijoules per inference: real-valued-input layers cost ops * e_mac,
/// spike-driven layers ops * rate * T * e_ac. `lif_rates` (per LIF layer)
/// overrides em.spike_rate when given.
double energy_mj(const Model& model, const EnergyModel& em, const std::vector<double>* lif_rates = nullptr);

double model_size_mb(std::size_t param_count, int bits_per_weight);

enum class SizeMode {
  PayloadBits,  ///< every weight at its payload bit-width
  IndexCodebook,    ///< ceil(log2 M)-bit indices plus the codebook itself
};
std::string to_string(SizeMode m);
SizeMode parse_size_mode(const std::string& text);

double model_size_mb(const Model& model, SizeMode mode = SizeMode::PayloadBits);

/// Wall-clock seconds per input, mean over `batches` batches after one
/// untimed warm-up batch. A proxy measured on the host CPU.
double latency_s(const Model& model, const Dataset& data, std::size_t batches = 3, std::size_t batch_size = 64);

/// perf / (l * e * s); any non-positive denominator is a ContractError.
double deploy_ratio(double perf, double l, double e, double s);

struct DeployMetrics {
  double perf_acc = 0.0;
  double perf_f1 = 0.0;
  double latency_s = 0.0;
  double energy_mj = 0.0;
  double size_mb = 0.0;
  double dr_acc = 0.0;
  double dr_f1 = 0.0;
};

DeployMetrics make_deploy_metrics(double acc, double f1, double latency, double energy, double size);

// ---- hardware profiles ------------------------------------------------------

struct HardwareProfile {
  std::string name;
  std::size_t max_unique_states = 0;
  std::vector<int> allowed_bits;
  std::size_t max_neurons = 0;
  std::size_t max_synapses = 0;

  void validate() const;
};

/// truenorth-like, generic-4bit, generic-8bit.
const std::vector<HardwareProfile>& builtin_profiles();

/// INI text, one [profile.<name>] section per profile with keys
/// max_unique_states, allowed_bits (comma list), max_neurons, max_synapses.
std::vector<HardwareProfile> parse_profiles(const std::string& text);
std::vector<HardwareProfile> load_profiles(const std::string& path);

/// Looks in `extra` first, then the built-in catalog.
HardwareProfile find_profile(const std::string& name, const std::vector<HardwareProfile>& extra = {});

struct ProfileCheck {
  std::string check;   // "unique_states", "bitwidth", "neurons", "synapses"
  std::optional<std::size_t> layer;
  double measured = 0.0;
  std::string limit;
  bool passed = false;
};

struct ProfileReport {
  std::string profile;
  std::vector<ProfileCheck> checks;

  bool passed() const;
  std::string to_csv() const;
  std::string to_table() const;
};

/// Neurons: every weight layer's output activations. Synapses: connections
/// (per-sample, per-step synaptic operations).
std::size_t neuron_count(const Model& model);
std::size_t synapse_count(const Model& model);

ProfileReport validate_profile(const Model& model, const HardwareProfile& profile);

// ---- LUT export -------------------------------------------------------------

enum class LutKind : std::uint32_t { IntegerCodebook = 0, RealLevels = 1 };

struct LutLayer {
  std::size_t layer_index = 0;
  LutKind kind = LutKind::RealLevels;
  std::uint32_t bitwidth = 32;
  std::uint32_t index_bits = 1;
  double scale = 1.0;
  /// Integer levels (kind 0, effective value scale * level) or real levels.
  std::vector<double> levels;
  Shape shape;
  std::vector<std::uint32_t> indices;

  Tensor effective() const;
};

struct LutFile {
  std::uint32_t version = 1;
  std::vector<LutLayer> layers;
};

/// Build the per-layer tables; a layer whose table exceeds
/// profile.max_unique_states is refused with its id.
LutFile build_lut(const Model& model, const HardwareProfile& profile);

std::vector<std::uint8_t> encode_lut(const LutFile& lut);
LutFile decode_lut(std::span<const std::uint8_t> bytes);

/// Writes `path` plus a JSON manifest at path + ".json" holding the layer
/// summary and the profile report.
void export_lut(const Model& model, const HardwareProfile& profile, const std::string& path);
LutFile read_lut(const std::string& path);

std::uint32_t index_bits_for(std::size_t m);

}  // namespace catsnn
