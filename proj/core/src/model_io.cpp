#include "catsnn/model_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "binio.hpp"

namespace catsnn {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'N', 'N', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

enum class PayloadTag : std::uint32_t { Float = 0, Qat = 1, Cat = 2, Cluster = 3, Ternary = 4 };

void put_section(detail::ByteWriter& out, const char (&tag)[5], const detail::ByteWriter& body) {
  out.raw(std::span(reinterpret_cast<const std::uint8_t*>(tag), 4));
  out.u64(body.bytes.size());
  out.raw(body.bytes);
}

void put_shape(detail::ByteWriter& w, const Shape& s) {
  w.u32(static_cast<std::uint32_t>(s.size()));
  for (auto d : s) w.u64(d);
}

Shape get_shape(detail::ByteReader& r) {
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw ParseError("model file: implausible tensor rank " + std::to_string(rank));
  Shape s;
  for (std::uint32_t i = 0; i < rank; ++i) s.push_back(r.u64());
  return s;
}

void put_indices(detail::ByteWriter& w, const std::vector<std::int32_t>& a) {
  w.u64(a.size());
  for (auto v : a) w.i32(v);
}

std::vector<std::int32_t> get_indices(detail::ByteReader& r) {
  const std::uint64_t n = r.u64();
  r.need(n * 4);
  std::vector<std::int32_t> a(n);
  for (auto& v : a) v = r.i32();
  return a;
}

void put_reals(detail::ByteWriter& w, const std::vector<double>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

std::vector<double> get_reals(detail::ByteReader& r) {
  const std::uint32_t n = r.u32();
  r.need(std::size_t{n} * 8);
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return v;
}

detail::ByteWriter encode_layer(const WeightLayer& l) {
  detail::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(l.layer_index));
  put_shape(w, l.latent.shape());
  for (double v : l.latent.data()) w.f64(v);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FloatPayload>) {
          w.u32(static_cast<std::uint32_t>(PayloadTag::Float));
        } else if constexpr (std::is_same_v<P, QatPayload>) {
          w.u32(static_cast<std::uint32_t>(PayloadTag::Qat));
          w.i32(p.bits);
        } else if constexpr (std::is_same_v<P, CatPayload>) {
          w.u32(static_cast<std::uint32_t>(PayloadTag::Cat));
          put_reals(w, p.codebook.levels);
          w.u8(p.codebook.quantized() ? 1 : 0);
          if (p.codebook.quantized()) {
            for (auto q : *p.codebook.q_levels) w.i32(q);
            w.f64(p.codebook.scale);
            w.i32(p.codebook.bitwidth);
            w.u32(static_cast<std::uint32_t>(p.codebook.mode));
          }
          put_indices(w, p.assignment);
        } else if constexpr (std::is_same_v<P, ClusterPayload>) {
          w.u32(static_cast<std::uint32_t>(PayloadTag::Cluster));
          put_reals(w, p.centroids);
          w.i32(p.bits);
          put_indices(w, p.assignment);
        } else {
          w.u32(static_cast<std::uint32_t>(PayloadTag::Ternary));
          w.f64(p.w_pos);
          w.f64(p.w_neg);
          w.f64(p.threshold_frac);
        }
      },
      l.payload);
  return w;
}

WeightLayer decode_layer(detail::ByteReader& r) {
  WeightLayer l;
  l.layer_index = r.u32();
  const Shape shape = get_shape(r);
  l.latent = Tensor(shape);
  r.need(l.latent.size() * 8);
  for (auto& v : l.latent.data()) v = r.f64();
  const std::uint32_t tag = r.u32();
  switch (static_cast<PayloadTag>(tag)) {
    case PayloadTag::Float:
      l.payload = FloatPayload{};
      break;
    case PayloadTag::Qat:
      l.payload = QatPayload{r.i32()};
      break;
    case PayloadTag::Cat: {
      CatPayload p;
      p.codebook.levels = get_reals(r);
      if (r.u8()) {
        std::vector<std::int32_t> q(p.codebook.levels.size());
        for (auto& v : q) v = r.i32();
        p.codebook.q_levels = std::move(q);
        p.codebook.scale = r.f64();
        p.codebook.bitwidth = r.i32();
        const std::uint32_t mode = r.u32();
        if (mode > 1) throw ParseError("model file: unknown codebook quantization mode");
        p.codebook.mode = static_cast<CodebookQuantMode>(mode);
      }
      p.assignment = get_indices(r);
      l.payload = std::move(p);
      break;
    }
    case PayloadTag::Cluster: {
      ClusterPayload p;
      p.centroids = get_reals(r);
      p.bits = r.i32();
      p.assignment = get_indices(r);
      l.payload = std::move(p);
      break;
    }
    case PayloadTag::Ternary: {
      TernaryPayload p;
      p.w_pos = r.f64();
      p.w_neg = r.f64();
      p.threshold_frac = r.f64();
      l.payload = p;
      break;
    }
    default:
      throw ParseError("model file: unknown payload tag " + std::to_string(tag));
  }
  return l;
}

void check_layer(const Model& m, const WeightLayer& l, std::size_t k) {
  const auto where = "model file: weight layer " + std::to_string(k);
  if (l.layer_index >= m.arch.layers.size() || !m.arch.layers[l.layer_index].has_weights())
    throw ParseError(where + " points at a layer without weights");
  if (l.latent.shape() != weight_shape(m.arch, l.layer_index)) throw ParseError(where + " has the wrong shape");
  auto check_index = [&](const std::vector<std::int32_t>& a, std::size_t levels) {
    if (a.size() != l.latent.size()) throw ParseError(where + ": assignment length mismatch");
    for (auto v : a)
      if (v < 0 || static_cast<std::size_t>(v) >= levels) throw ParseError(where + ": assignment out of range");
  };
  if (const auto* c = std::get_if<CatPayload>(&l.payload)) {
    try {
      c->codebook.validate();
    } catch (const ContractError& e) {
      throw ParseError(where + ": " + e.what());
    }
    check_index(c->assignment, c->codebook.m());
  }
  if (const auto* c = std::get_if<ClusterPayload>(&l.payload)) check_index(c->assignment, c->centroids.size());
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Model& model) {
  detail::ByteWriter out;
  out.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 8));
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(4 + model.weights.size()));

  detail::ByteWriter arch;
  put_shape(arch, model.arch.input);
  arch.str(model.arch.to_text());
  put_section(out, "ARCH", arch);

  detail::ByteWriter snn;
  snn.f64(model.lif.beta);
  snn.f64(model.lif.u_thr);
  snn.u64(model.lif.t_steps);
  snn.f64(model.lif.surrogate_alpha);
  snn.u32(static_cast<std::uint32_t>(model.activation));
  snn.u32(static_cast<std::uint32_t>(model.readout));
  put_section(out, "SNNC", snn);

  detail::ByteWriter prov;
  prov.u32(static_cast<std::uint32_t>(model.provenance.size()));
  for (const auto& p : model.provenance) prov.str(p);
  put_section(out, "PROV", prov);

  detail::ByteWriter hash;
  hash.u64(model.config_hash);
  put_section(out, "HASH", hash);

  for (const auto& l : model.weights) put_section(out, "LAYR", encode_layer(l));
  return out.bytes;
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r{bytes, 0, "model file"};
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw ParseError("not a model file (bad magic)");
  r.pos = 8;
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("unsupported model file version " + std::to_string(version));
  const std::uint32_t sections = r.u32();

  Model m;
  bool seen_arch = false, seen_snn = false;
  for (std::uint32_t s = 0; s < sections; ++s) {
    r.need(4);
    const std::string tag(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos), bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + 4));
    r.pos += 4;
    const std::uint64_t len = r.u64();
    r.need(len);
    detail::ByteReader body{bytes.subspan(r.pos, len), 0, "model file section"};
    r.pos += len;
    if (tag == "ARCH") {
      const Shape input = get_shape(body);
      m.arch = Architecture::parse(body.str(), input);
      seen_arch = true;
    } else if (tag == "SNNC") {
      m.lif.beta = body.f64();
      m.lif.u_thr = body.f64();
      m.lif.t_steps = body.u64();
      m.lif.surrogate_alpha = body.f64();
      const std::uint32_t act = body.u32(), ro = body.u32();
      if (act > 2 || ro > 1) throw ParseError("model file: bad activation or readout tag");
      m.activation = static_cast<Activation>(act);
      m.readout = static_cast<Readout>(ro);
      seen_snn = true;
    } else if (tag == "PROV") {
      const std::uint32_t n = body.u32();
      for (std::uint32_t i = 0; i < n; ++i) m.provenance.push_back(body.str());
    } else if (tag == "HASH") {
      m.config_hash = body.u64();
    } else if (tag == "LAYR") {
      if (!seen_arch) throw ParseError("model file: LAYR section before ARCH");
      m.weights.push_back(decode_layer(body));
    } else {
      throw ParseError("model file: unknown section tag '" + tag + "'");
    }
    if (!body.done()) throw ParseError("model file: section " + tag + " has trailing bytes");
  }
  if (!r.done()) throw ParseError("model file has trailing bytes");
  if (!seen_arch || !seen_snn) throw ParseError("model file: missing ARCH or SNNC section");
  try {
    m.arch.validate();
    m.lif.validate();
  } catch (const std::logic_error& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
  std::size_t expected = 0;
  for (const auto& l : m.arch.layers) expected += l.has_weights();
  if (m.weights.size() != expected) throw ParseError("model file: weight layer count does not match the architecture");
  for (std::size_t k = 0; k < m.weights.size(); ++k) check_layer(m, m.weights[k], k);
  return m;
}

void save_model(const Model& model, const std::string& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StateError("cannot write model file " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StateError("failed writing model file " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open model file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace catsnn
