#include "catsnn/deploy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "binio.hpp"
#include "catsnn/network.hpp"

namespace catsnn {

ClassificationMetrics classification_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                             std::size_t k_classes) {
  if (preds.empty()) throw ContractError("classification_metrics: empty input");
  if (preds.size() != labels.size()) throw DimensionError("classification_metrics: preds and labels differ in length");
  if (k_classes == 0) throw ContractError("classification_metrics: k_classes must be positive");
  std::vector<std::size_t> tp(k_classes, 0), pred_n(k_classes, 0), true_n(k_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = static_cast<std::size_t>(preds[i]);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (preds[i] < 0 || labels[i] < 0 || p >= k_classes || y >= k_classes)
      throw ContractError("classification_metrics: class id out of range");
    ++pred_n[p];
    ++true_n[y];
    if (p == y) {
      ++tp[p];
      ++correct;
    }
  }
  auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  for (std::size_t c = 0; c < k_classes; ++c) {
    const double p = ratio(static_cast<double>(tp[c]), static_cast<double>(pred_n[c]));
    const double r = ratio(static_cast<double>(tp[c]), static_cast<double>(true_n[c]));
    m.macro_precision += p;
    m.macro_recall += r;
    m.macro_f1 += ratio(2.0 * p * r, p + r);
  }
  const auto k = static_cast<double>(k_classes);
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.macro_f1 /= k;
  return m;
}

void EnergyModel::validate() const {
  if (!(e_mac_pj > 0.0) || !(e_ac_pj > 0.0)) throw ContractError("energy constants must be positive");
  if (!(spike_rate >= 0.0 && spike_rate <= 1.0)) throw ContractError("spike rate must lie in [0, 1]");
  if (timesteps == 0) throw ContractError("energy model needs at least one timestep");
}

std::vector<LayerOps> layer_op_counts(const Model& model) {
  const auto shapes = model.arch.activation_shapes();
  const bool spiking_model = model.activation != Activation::Relu;
  std::vector<LayerOps> out;
  bool spikes_in = false;
  std::size_t lif_seen = 0;
  for (std::size_t j = 0; j < model.arch.layers.size(); ++j) {
    const auto& l = model.arch.layers[j];
    if (l.kind == LayerKind::Lif) {
      spikes_in = spiking_model;
      ++lif_seen;
    }
    if (!l.has_weights()) continue;
    const std::size_t slot = model.weight_slot(j);
    const Shape& os = shapes[j];
    const std::size_t positions = os.size() > 1 ? shape_numel(os) / os[0] : 1;
    LayerOps ops;
    ops.weight_slot = slot;
    ops.ops = model.weights[slot].latent.size() * positions;
    ops.spiking_input = spikes_in;
    ops.source_lif = lif_seen == 0 ? 0 : lif_seen - 1;
    out.push_back(ops);
  }
  return out;
}

std::vector<double> measure_spike_rates(const Model& model, const Tensor& x) {
  Graph g;
  g.set_grad_enabled(false);
  auto b = bind_weights_const(g, model);
  ForwardOptions fo;
  fo.record_activity = true;
  auto trace = forward(g, model, b.effective, x, fo);
  std::vector<double> rates;
  for (const auto& rec : collect_activity(g, trace, false)) {
    const auto d = rec.y.data();
    rates.push_back(std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(rec.y.size()));
  }
  return rates;
}

double energy_mj(const Model& model, const EnergyModel& em, const std::vector<double>* lif_rates) {
  em.validate();
  if (lif_rates && lif_rates->size() != model.num_lif_layers())
    throw DimensionError("energy_mj: expected one spike rate per LIF layer");
  double pj = 0.0;
  for (const auto& op : layer_op_counts(model)) {
    const auto n = static_cast<double>(op.ops);
    if (!op.spiking_input) {
      pj += n * em.e_mac_pj;
    } else {
      const double r = lif_rates ? (*lif_rates)[op.source_lif] : em.spike_rate;
      pj += n * r * static_cast<double>(em.timesteps) * em.e_ac_pj;
    }
  }
  return pj * 1e-9;
}

double model_size_mb(std::size_t param_count, int bits_per_weight) {
  if (param_count == 0 || bits_per_weight <= 0) throw ContractError("model_size_mb: inputs must be positive");
  return static_cast<double>(param_count) * static_cast<double>(bits_per_weight) / 8e6;
}

std::string to_string(SizeMode m) { return m == SizeMode::PayloadBits ? "payload-bits" : "index-codebook"; }

SizeMode parse_size_mode(const std::string& text) {
  if (text == "payload-bits") return SizeMode::PayloadBits;
  if (text == "index-codebook") return SizeMode::IndexCodebook;
  throw ParseError("unknown size mode '" + text + "'");
}

std::uint32_t index_bits_for(std::size_t m) {
  std::uint32_t bits = 1;
  while ((std::size_t{1} << bits) < m) ++bits;
  return bits;
}

double model_size_mb(const Model& model, SizeMode mode) {
  double bits = 0.0;
  for (const auto& w : model.weights) {
    const auto p = static_cast<double>(w.latent.size());
    const int b = payload_bitwidth(w);
    if (mode == SizeMode::PayloadBits) {
      bits += p * b;
      continue;
    }
    if (const auto* cat = std::get_if<CatPayload>(&w.payload)) {
      bits += p * index_bits_for(cat->codebook.m()) + static_cast<double>(cat->codebook.m()) * b;
    } else if (const auto* cl = std::get_if<ClusterPayload>(&w.payload)) {
      bits += p * index_bits_for(cl->centroids.size()) + static_cast<double>(cl->centroids.size()) * b;
    } else if (std::holds_alternative<TernaryPayload>(w.payload)) {
      bits += p * 2.0 + 2.0 * 32.0;
    } else {
      bits += p * b;
    }
  }
  return bits / 8e6;
}

double latency_s(const Model& model, const Dataset& data, std::size_t batches, std::size_t batch_size) {
  if (batches == 0 || batch_size == 0 || data.size() == 0) throw ContractError("latency_s: empty measurement");
  auto batch = [&](std::size_t k) {
    std::vector<std::size_t> idx(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) idx[i] = (k * batch_size + i) % data.size();
    return data.batch_images(idx);
  };
  (void)predict_logits(model, batch(0));
  double seconds = 0.0;
  for (std::size_t k = 0; k < batches; ++k) {
    const Tensor x = batch(k);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor logits = predict_logits(model, x);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (logits.size() == 0) throw StateError("latency_s: empty logits");
  }
  return seconds / static_cast<double>(batches * batch_size);
}

double deploy_ratio(double perf, double l, double e, double s) {
  if (!(l > 0.0) || !(e > 0.0) || !(s > 0.0))
    throw ContractError(fmt::format("deploy_ratio: latency, energy and size must be positive (got {}, {}, {})", l, e, s));
  if (!(perf >= 0.0 && perf <= 1.0)) throw ContractError("deploy_ratio: performance must lie in [0, 1]");
  return perf / (l * e * s);
}

DeployMetrics make_deploy_metrics(double acc, double f1, double latency, double energy, double size) {
  DeployMetrics m{acc, f1, latency, energy, size, 0.0, 0.0};
  m.dr_acc = deploy_ratio(acc, latency, energy, size);
  m.dr_f1 = deploy_ratio(f1, latency, energy, size);
  return m;
}

void HardwareProfile::validate() const {
  if (name.empty()) throw ContractError("hardware profile needs a name");
  if (max_unique_states == 0 || allowed_bits.empty() || max_neurons == 0 || max_synapses == 0)
    throw ContractError("hardware profile '" + name + "': all bounds must be positive");
  for (int b : allowed_bits)
    if (b <= 0) throw ContractError("hardware profile '" + name + "': bit-widths must be positive");
}

const std::vector<HardwareProfile>& builtin_profiles() {
  static const std::vector<HardwareProfile> catalog{
      {"truenorth-like", 4, {2, 4, 8}, 1048576, 268435456},
      {"generic-4bit", 16, {2, 4}, 1048576, 268435456},
      {"generic-8bit", 256, {2, 4, 8}, 1048576, 268435456},
  };
  return catalog;
}

std::vector<HardwareProfile> parse_profiles(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(std::string("profile file: ") + e.what());
  }
  std::vector<HardwareProfile> out;
  for (const auto& [section, body] : tree) {
    if (section.rfind("profile.", 0) != 0) throw ParseError("profile file: unexpected section [" + section + "]");
    HardwareProfile p;
    p.name = section.substr(8);
    for (const auto& [key, value] : body) {
      const std::string v = value.get_value<std::string>();
      try {
        if (key == "max_unique_states") {
          p.max_unique_states = std::stoull(v);
        } else if (key == "max_neurons") {
          p.max_neurons = std::stoull(v);
        } else if (key == "max_synapses") {
          p.max_synapses = std::stoull(v);
        } else if (key == "allowed_bits") {
          std::istringstream bits(v);
          for (std::string tok; std::getline(bits, tok, ',');) p.allowed_bits.push_back(std::stoi(tok));
        } else {
          throw ParseError("profile file: unknown key '" + key + "' in [" + section + "]");
        }
      } catch (const std::logic_error&) {
        throw ParseError("profile file: bad value '" + v + "' for " + key + " in [" + section + "]");
      }
    }
    try {
      p.validate();
    } catch (const ContractError& e) {
      throw ParseError(e.what());
    }
    out.push_back(p);
  }
  return out;
}

std::vector<HardwareProfile> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profiles(ss.str());
}

HardwareProfile find_profile(const std::string& name, const std::vector<HardwareProfile>& extra) {
  for (const auto& p : extra)
    if (p.name == name) return p;
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  throw ParseError("unknown hardware profile '" + name + "'");
}

std::size_t neuron_count(const Model& model) {
  const auto shapes = model.arch.activation_shapes();
  std::size_t n = 0;
  for (const auto& w : model.weights) n += shape_numel(shapes[w.layer_index]);
  return n;
}

std::size_t synapse_count(const Model& model) {
  std::size_t n = 0;
  for (const auto& op : layer_op_counts(model)) n += op.ops;
  return n;
}

bool ProfileReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ProfileCheck& c) { return c.passed; });
}

std::string ProfileReport::to_csv() const {
  std::string out = "profile,check,layer,measured,limit,status\n";
  for (const auto& c : checks)
    out += fmt::format("{},{},{},{},\"{}\",{}\n", profile, c.check, c.layer ? std::to_string(*c.layer) : "", c.measured,
                       c.limit, c.passed ? "pass" : "fail");
  return out;
}

std::string ProfileReport::to_table() const {
  std::string out = fmt::format("profile {}: {}\n", profile, passed() ? "PASS" : "FAIL");
  for (const auto& c : checks)
    out += fmt::format("  {:<14} {:>6} measured={:<12} limit={:<12} {}\n", c.check,
                       c.layer ? "L" + std::to_string(*c.layer) : "-", c.measured, c.limit, c.passed ? "pass" : "FAIL");
  return out;
}

ProfileReport validate_profile(const Model& model, const HardwareProfile& profile) {
  profile.validate();
  ProfileReport r;
  r.profile = profile.name;
  std::string bits_text;
  for (int b : profile.allowed_bits) bits_text += (bits_text.empty() ? "" : "|") + std::to_string(b);
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    const std::size_t u = unique_weight_count(model.weights[k]);
    r.checks.push_back({"unique_states", k, static_cast<double>(u), std::to_string(profile.max_unique_states),
                        u <= profile.max_unique_states});
    const int b = payload_bitwidth(model.weights[k]);
    const bool ok = std::find(profile.allowed_bits.begin(), profile.allowed_bits.end(), b) != profile.allowed_bits.end();
    r.checks.push_back({"bitwidth", k, static_cast<double>(b), bits_text, ok});
  }
  const std::size_t n = neuron_count(model), s = synapse_count(model);
  r.checks.push_back({"neurons", std::nullopt, static_cast<double>(n), std::to_string(profile.max_neurons),
                      n <= profile.max_neurons});
  r.checks.push_back({"synapses", std::nullopt, static_cast<double>(s), std::to_string(profile.max_synapses),
                      s <= profile.max_synapses});
  return r;
}

Tensor LutLayer::effective() const {
  Tensor out(shape);
  if (indices.size() != out.size()) throw StateError("LUT layer index count does not match its shape");
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double level = levels.at(indices[i]);
    out[i] = kind == LutKind::IntegerCodebook ? scale * level : level;
  }
  return out;
}

LutFile build_lut(const Model& model, const HardwareProfile& profile) {
  LutFile lut;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    const auto& w = model.weights[k];
    LutLayer layer;
    layer.layer_index = w.layer_index;
    layer.shape = w.latent.shape();
    layer.bitwidth = static_cast<std::uint32_t>(payload_bitwidth(w));
    std::vector<std::int32_t> index;
    const auto* cat = std::get_if<CatPayload>(&w.payload);
    if (cat && cat->codebook.quantized()) {
      layer.kind = LutKind::IntegerCodebook;
      layer.scale = cat->codebook.scale;
      for (auto q : *cat->codebook.q_levels) layer.levels.push_back(q);
      index = assign(w.latent, cat->codebook.reconstructed_levels()).index;
    } else if (cat) {
      layer.levels = cat->codebook.levels;
      index = assign(w.latent, layer.levels).index;
    } else {
      // Every other payload: the table is the sorted set of effective values.
      const Tensor eff = effective_weights(w);
      layer.levels.assign(eff.data().begin(), eff.data().end());
      std::sort(layer.levels.begin(), layer.levels.end());
      layer.levels.erase(std::unique(layer.levels.begin(), layer.levels.end()), layer.levels.end());
      for (std::size_t i = 0; i < eff.size(); ++i) {
        const auto it = std::lower_bound(layer.levels.begin(), layer.levels.end(), eff[i]);
        index.push_back(static_cast<std::int32_t>(it - layer.levels.begin()));
      }
    }
    if (layer.levels.size() > profile.max_unique_states)
      throw ValidationError(fmt::format("export refused: layer {} (weight slot {}) needs {} levels, profile '{}' allows {}",
                                   w.layer_index, k, layer.levels.size(), profile.name, profile.max_unique_states));
    layer.index_bits = index_bits_for(layer.levels.size());
    layer.indices.assign(index.begin(), index.end());
    lut.layers.push_back(std::move(layer));
  }
  return lut;
}

namespace {

constexpr char kLutMagic[8] = {'C', 'S', 'N', 'N', 'L', 'U', 'T', '\0'};

}  // namespace

std::vector<std::uint8_t> encode_lut(const LutFile& lut) {
  detail::ByteWriter w;
  w.bytes.insert(w.bytes.end(), std::begin(kLutMagic), std::end(kLutMagic));
  w.u32(lut.version);
  w.u32(static_cast<std::uint32_t>(lut.layers.size()));
  for (const auto& l : lut.layers) {
    w.u32(static_cast<std::uint32_t>(l.layer_index));
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(l.bitwidth);
    w.u32(l.index_bits);
    w.f64(l.scale);
    w.u32(static_cast<std::uint32_t>(l.levels.size()));
    for (double v : l.levels) {
      if (l.kind == LutKind::IntegerCodebook)
        w.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
      else
        w.f64(v);
    }
    w.u32(static_cast<std::uint32_t>(l.shape.size()));
    for (auto d : l.shape) w.u64(d);
    // Indices packed LSB-first into a little-endian bit stream.
    std::vector<std::uint8_t> packed((l.indices.size() * l.index_bits + 7) / 8, 0);
    std::size_t bit = 0;
    for (auto idx : l.indices)
      for (std::uint32_t b = 0; b < l.index_bits; ++b, ++bit)
        if ((idx >> b) & 1U) packed[bit / 8] |= static_cast<std::uint8_t>(1U << (bit % 8));
    w.u64(packed.size());
    w.bytes.insert(w.bytes.end(), packed.begin(), packed.end());
  }
  return w.bytes;
}

LutFile decode_lut(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r{bytes, 0, "LUT file"};
  r.need(8);
  if (!std::equal(std::begin(kLutMagic), std::end(kLutMagic), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
    throw ParseError("not a LUT file (bad magic)");
  r.pos = 8;
  LutFile lut;
  lut.version = r.u32();
  if (lut.version != 1) throw ParseError("unsupported LUT version " + std::to_string(lut.version));
  const std::uint32_t n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    LutLayer l;
    l.layer_index = r.u32();
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw ParseError("LUT layer " + std::to_string(k) + ": unknown kind " + std::to_string(kind));
    l.kind = static_cast<LutKind>(kind);
    l.bitwidth = r.u32();
    l.index_bits = r.u32();
    if (l.index_bits == 0 || l.index_bits > 31) throw ParseError("LUT layer " + std::to_string(k) + ": bad index width");
    l.scale = r.f64();
    const std::uint32_t m = r.u32();
    for (std::uint32_t i = 0; i < m; ++i)
      l.levels.push_back(l.kind == LutKind::IntegerCodebook ? static_cast<double>(static_cast<std::int32_t>(r.u32()))
                                                            : r.f64());
    const std::uint32_t rank = r.u32();
    for (std::uint32_t i = 0; i < rank; ++i) l.shape.push_back(r.u64());
    const std::size_t count = shape_numel(l.shape);
    const std::uint64_t packed = r.u64();
    if (packed != (count * l.index_bits + 7) / 8) throw ParseError("LUT layer " + std::to_string(k) + ": bad index block");
    r.need(packed);
    std::size_t bit = r.pos * 8;
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t idx = 0;
      for (std::uint32_t b = 0; b < l.index_bits; ++b, ++bit)
        if ((bytes[bit / 8] >> (bit % 8)) & 1U) idx |= 1U << b;
      if (idx >= m) throw ParseError("LUT layer " + std::to_string(k) + ": index out of range");
      l.indices.push_back(idx);
    }
    r.pos += packed;
    lut.layers.push_back(std::move(l));
  }
  if (r.pos != bytes.size()) throw ParseError("LUT file has trailing bytes");
  return lut;
}

void export_lut(const Model& model, const HardwareProfile& profile, const std::string& path) {
  const LutFile lut = build_lut(model, profile);
  const auto bytes = encode_lut(lut);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StateError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  const ProfileReport report = validate_profile(model, profile);
  nlohmann::ordered_json manifest;
  manifest["format"] = "CSNNLUT";
  manifest["version"] = lut.version;
  manifest["bytes"] = bytes.size();
  for (std::size_t k = 0; k < lut.layers.size(); ++k) {
    const auto& l = lut.layers[k];
    nlohmann::ordered_json j;
    j["layer_index"] = l.layer_index;
    j["payload"] = payload_name(model.weights[k].payload);
    j["kind"] = l.kind == LutKind::IntegerCodebook ? "integer-codebook" : "real-levels";
    j["bitwidth"] = l.bitwidth;
    j["index_bits"] = l.index_bits;
    j["levels"] = l.levels.size();
    j["scale"] = l.scale;
    j["shape"] = l.shape;
    if (const auto* cat = std::get_if<CatPayload>(&model.weights[k].payload); cat && cat->codebook.quantized())
      j["quant_mode"] = to_string(cat->codebook.mode);
    manifest["layers"].push_back(j);
  }
  nlohmann::ordered_json prof;
  prof["name"] = report.profile;
  prof["passed"] = report.passed();
  for (const auto& c : report.checks) {
    nlohmann::ordered_json j;
    j["check"] = c.check;
    if (c.layer) j["layer"] = *c.layer;
    j["measured"] = c.measured;
    j["limit"] = c.limit;
    j["passed"] = c.passed;
    prof["checks"].push_back(j);
  }
  manifest["profile"] = prof;
  std::ofstream js(path + ".json");
  if (!js) throw StateError("cannot write " + path + ".json");
  js << manifest.dump(2) << '\n';
}

LutFile read_lut(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open LUT file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_lut(bytes);
}

}  // namespace catsnn
