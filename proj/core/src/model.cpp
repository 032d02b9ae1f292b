#include "catsnn/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "catsnn/baselines.hpp"

namespace catsnn {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string{} : cur.substr(b, e - b + 1));
  }
  return out;
}

std::size_t to_extent(const std::string& tok, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(tok, &pos);
    if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + tok + "' in layer '" + ctx + "'");
  }
}

}  // namespace

Architecture Architecture::parse(const std::string& text, Shape input) {
  Architecture arch;
  arch.input = std::move(input);
  for (const auto& item : split(text, ',')) {
    if (item.empty()) continue;
    const auto f = split(item, ':');
    LayerSpec l;
    if (f[0] == "conv") {
      if (f.size() < 3 || f.size() > 5) throw ParseError("conv layer needs conv:out:kernel[:stride[:pad]], got '" + item + "'");
      l.kind = LayerKind::Conv;
      l.out = to_extent(f[1], item);
      l.kernel = to_extent(f[2], item);
      l.stride = f.size() > 3 ? to_extent(f[3], item) : 1;
      l.pad = f.size() > 4 ? to_extent(f[4], item) : 0;
    } else if (f[0] == "dense") {
      if (f.size() != 2) throw ParseError("dense layer needs dense:out, got '" + item + "'");
      l.kind = LayerKind::Dense;
      l.out = to_extent(f[1], item);
    } else if (f[0] == "lif" && f.size() == 1) {
      l.kind = LayerKind::Lif;
    } else if (f[0] == "avgpool") {
      l.kind = LayerKind::AvgPool;
      l.kernel = f.size() > 1 ? to_extent(f[1], item) : 2;
    } else if (f[0] == "flatten" && f.size() == 1) {
      l.kind = LayerKind::Flatten;
    } else {
      throw ParseError("unknown layer '" + item + "'");
    }
    arch.layers.push_back(l);
  }
  arch.validate();
  return arch;
}

std::string Architecture::to_text() const {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ",";
    switch (l.kind) {
      case LayerKind::Conv:
        out += "conv:" + std::to_string(l.out) + ":" + std::to_string(l.kernel) + ":" + std::to_string(l.stride) +
               ":" + std::to_string(l.pad);
        break;
      case LayerKind::Dense: out += "dense:" + std::to_string(l.out); break;
      case LayerKind::Lif: out += "lif"; break;
      case LayerKind::AvgPool: out += "avgpool:" + std::to_string(l.kernel); break;
      case LayerKind::Flatten: out += "flatten"; break;
    }
  }
  return out;
}

std::vector<Shape> Architecture::activation_shapes() const {
  std::vector<Shape> shapes;
  Shape cur = input;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cur.size() != 3) throw DimensionError("conv layer expects C x H x W input, got " + to_string(cur));
        if (l.kernel == 0 || l.stride == 0) throw DimensionError("conv kernel and stride must be positive");
        if (l.kernel > cur[1] + 2 * l.pad || l.kernel > cur[2] + 2 * l.pad)
          throw DimensionError("conv kernel does not fit input " + to_string(cur));
        cur = Shape{l.out, (cur[1] + 2 * l.pad - l.kernel) / l.stride + 1, (cur[2] + 2 * l.pad - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::Dense:
        if (cur.size() != 1) throw DimensionError("dense layer expects a flat input, got " + to_string(cur));
        cur = Shape{l.out};
        break;
      case LayerKind::Lif: break;
      case LayerKind::AvgPool:
        if (cur.size() != 3 || l.kernel == 0 || cur[1] < l.kernel || cur[2] < l.kernel)
          throw DimensionError("avgpool window does not fit " + to_string(cur));
        cur = Shape{cur[0], cur[1] / l.kernel, cur[2] / l.kernel};
        break;
      case LayerKind::Flatten: cur = Shape{shape_numel(cur)}; break;
    }
    for (auto e : cur)
      if (e == 0) throw DimensionError("layer produces an empty activation");
    shapes.push_back(cur);
  }
  return shapes;
}

void Architecture::validate() const {
  if (input.size() != 3) throw DimensionError("architecture input must be C x H x W");
  if (layers.empty()) throw ContractError("architecture has no layers");
  (void)activation_shapes();
  bool any_weights = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_weights()) {
      any_weights = true;
      if (layers[i].out == 0) throw DimensionError("weight layer with zero outputs");
    }
    if (layers[i].kind == LayerKind::Lif && (i == 0 || !layers[i - 1].has_weights()))
      throw ContractError("every LIF layer must directly follow a conv or dense layer");
  }
  if (!any_weights) throw ContractError("architecture has no weight layers");
  if (!layers.back().has_weights() || layers.back().kind != LayerKind::Dense)
    throw ContractError("architecture must end in a dense classifier head");
}

bool Architecture::operator==(const Architecture& o) const { return input == o.input && to_text() == o.to_text(); }

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Lif: return "lif";
    case Activation::LifSmooth: return "lif-smooth";
    case Activation::Relu: return "relu";
  }
  return "lif";
}

Activation parse_activation(const std::string& text) {
  if (text == "lif") return Activation::Lif;
  if (text == "lif-smooth") return Activation::LifSmooth;
  if (text == "relu") return Activation::Relu;
  throw ParseError("unknown activation '" + text + "'");
}

std::string to_string(Readout r) { return r == Readout::Mean ? "mean" : "sum"; }

Readout parse_readout(const std::string& text) {
  if (text == "mean") return Readout::Mean;
  if (text == "sum") return Readout::Sum;
  throw ParseError("unknown readout '" + text + "'");
}

std::string payload_name(const Payload& p) {
  static const char* names[] = {"float", "qat", "cat", "cluster", "ternary"};
  return names[p.index()];
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.latent.size();
  return n;
}

std::vector<std::size_t> Model::spiking_weight_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const auto li = weights[k].layer_index;
    if (li + 1 < arch.layers.size() && arch.layers[li + 1].kind == LayerKind::Lif) out.push_back(k);
  }
  return out;
}

std::size_t Model::weight_slot(std::size_t layer_index) const {
  for (std::size_t k = 0; k < weights.size(); ++k)
    if (weights[k].layer_index == layer_index) return k;
  throw ContractError("layer " + std::to_string(layer_index) + " has no weights");
}

std::size_t Model::num_lif_layers() const {
  std::size_t n = 0;
  for (const auto& l : arch.layers) n += l.kind == LayerKind::Lif;
  return n;
}

std::size_t Model::classes() const { return arch.layers.back().out; }

Shape weight_shape(const Architecture& arch, std::size_t layer_index) {
  const auto shapes = arch.activation_shapes();
  const Shape& in = layer_index == 0 ? arch.input : shapes[layer_index - 1];
  const auto& l = arch.layers.at(layer_index);
  if (l.kind == LayerKind::Conv) return Shape{l.out, in[0], l.kernel, l.kernel};
  if (l.kind == LayerKind::Dense) return Shape{l.out, in[0]};
  throw ContractError("layer " + std::to_string(layer_index) + " has no weights");
}

Model init_model(const Architecture& arch, const LifConfig& lif, std::uint64_t seed, double init_gain) {
  arch.validate();
  lif.validate();
  Model m;
  m.arch = arch;
  m.lif = lif;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (!arch.layers[i].has_weights()) continue;
    const Shape shape = weight_shape(arch, i);
    const std::size_t fan_in = shape_numel(shape) / shape[0];
    std::normal_distribution<double> dist(0.0, init_gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor w(shape);
    for (auto& v : w.values()) v = dist(rng);
    m.weights.push_back(WeightLayer{i, std::move(w), FloatPayload{}});
  }
  return m;
}

Tensor effective_weights(const WeightLayer& layer) {
  return std::visit(
      [&](const auto& p) -> Tensor {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FloatPayload>) {
          return layer.latent;
        } else if constexpr (std::is_same_v<P, QatPayload>) {
          return uniform_fake_quant(layer.latent, p.bits);
        } else if constexpr (std::is_same_v<P, CatPayload>) {
          if (p.codebook.quantized()) return reconstruct_quantized(layer.latent, p.codebook);
          return assign(layer.latent, p.codebook.levels).snapped;
        } else if constexpr (std::is_same_v<P, ClusterPayload>) {
          Tensor out(layer.latent.shape());
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.centroids.at(static_cast<std::size_t>(p.assignment.at(i)));
          return out;
        } else {
          return ternary_forward(TernaryLayer{layer.latent, p.w_pos, p.w_neg, p.threshold_frac});
        }
      },
      layer.payload);
}

std::size_t unique_weight_count(const WeightLayer& layer) {
  const Tensor w = effective_weights(layer);
  return count_unique(w.data());
}

int payload_bitwidth(const WeightLayer& layer) {
  return std::visit(
      [](const auto& p) -> int {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FloatPayload>) return 32;
        else if constexpr (std::is_same_v<P, QatPayload>) return p.bits;
        else if constexpr (std::is_same_v<P, CatPayload>) return p.codebook.quantized() ? p.codebook.bitwidth : 32;
        else if constexpr (std::is_same_v<P, ClusterPayload>) return p.bits;
        else return 2;
      },
      layer.payload);
}

}  // namespace catsnn
