#include "catsnn/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace catsnn {

namespace {

constexpr std::pair<StageKind, const char*> kStageNames[] = {
    {StageKind::Fp32Train, "fp32-train"}, {StageKind::Qat, "qat"},
    {StageKind::Cluster, "cluster"},      {StageKind::Cat, "cat"},
    {StageKind::FscPrune, "fsc-prune"},   {StageKind::Ternary, "ternary"},
    {StageKind::Finetune, "finetune"},    {StageKind::QuantizeCodebook, "quantize-codebook"},
    {StageKind::Export, "export"},
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');)
    if (auto t = trim(tok); !t.empty()) out.push_back(t);
  return out;
}

// One INI section; every key must be read exactly once or it is reported as
// unknown by finish().
class Section {
 public:
  Section(std::string name, const boost::property_tree::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return trim(it->second.get_value<std::string>());
  }

  template <class T, class Conv>
  void read(const std::string& key, T& dst, Conv conv) {
    auto v = raw(key);
    if (!v) return;
    try {
      dst = conv(*v);
    } catch (const ParseError& e) {
      throw ParseError(fmt::format("[{}] {}: {}", name_, key, e.what()));
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("[{}] {}: bad value '{}'", name_, key, *v));
    }
  }

  void size(const std::string& key, std::size_t& dst) {
    read(key, dst, [](const std::string& s) {
      if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    });
  }
  void u64(const std::string& key, std::uint64_t& dst) {
    std::size_t v = dst;
    size(key, v);
    dst = v;
  }
  void integer(const std::string& key, int& dst) {
    read(key, dst, [](const std::string& s) {
      std::size_t pos = 0;
      const int v = std::stoi(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void real(const std::string& key, double& dst) {
    read(key, dst, [](const std::string& s) {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void boolean(const std::string& key, bool& dst) {
    read(key, dst, [](const std::string& s) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw std::invalid_argument(s);
    });
  }
  void text(const std::string& key, std::string& dst) {
    read(key, dst, [](const std::string& s) { return s; });
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_) {
      (void)value;
      if (!used_.count(key)) throw ParseError(fmt::format("[{}]: unknown key '{}'", name_, key));
    }
  }

 private:
  std::string name_;
  const boost::property_tree::ptree* tree_;
  std::set<std::string> used_;
};

StageConfig stage_defaults(const std::string& name, StageKind kind, std::size_t epochs, double lr) {
  StageConfig s;
  s.name = name;
  s.kind = kind;
  s.epochs = epochs;
  s.lr = lr;
  return s;
}

}  // namespace

std::string to_string(StageKind k) {
  for (const auto& [kind, name] : kStageNames)
    if (kind == k) return name;
  return "fp32-train";
}

StageKind parse_stage_kind(const std::string& text) {
  for (const auto& [kind, name] : kStageNames)
    if (text == name) return kind;
  throw ParseError("unknown stage kind '" + text + "'");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.data.synthetic.noise = 0.7;
  c.stages = {
      stage_defaults("fp32", StageKind::Fp32Train, 30, 1e-2),
      stage_defaults("cat", StageKind::Cat, 15, 1e-4),
      stage_defaults("prune", StageKind::FscPrune, 0, 0.0),
      stage_defaults("finetune", StageKind::Finetune, 15, 1e-4),
      stage_defaults("quantize", StageKind::QuantizeCodebook, 0, 0.0),
      stage_defaults("export", StageKind::Export, 0, 0.0),
  };
  return c;
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  {
    std::istringstream in(text);
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ParseError(std::string("config: ") + e.what());
    }
  }
  const std::set<std::string> known{"run", "data", "arch", "snn", "cat", "prune", "ternary", "qat", "cluster", "eval", "pipeline"};
  for (const auto& [name, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ParseError("config: key '" + name + "' outside any section");
    if (!known.count(name) && name.rfind("stage.", 0) != 0) throw ParseError("config: unknown section [" + name + "]");
  }
  auto section = [&](const std::string& name) {
    auto it = tree.find(name);
    return Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  PipelineConfig c = defaults();
  {
    auto s = section("run");
    s.u64("seed", c.seed);
    s.size("batch_size", c.batch_size);
    s.finish();
  }
  {
    auto s = section("data");
    s.text("kind", c.data.kind);
    s.size("classes", c.data.synthetic.classes);
    s.size("channels", c.data.synthetic.channels);
    s.size("height", c.data.synthetic.height);
    s.size("width", c.data.synthetic.width);
    s.real("noise", c.data.synthetic.noise);
    s.size("train_per_class", c.data.synthetic.train_per_class);
    s.size("test_per_class", c.data.synthetic.test_per_class);
    s.text("train_images", c.data.train_images);
    s.text("train_labels", c.data.train_labels);
    s.text("test_images", c.data.test_images);
    s.text("test_labels", c.data.test_labels);
    s.finish();
  }
  {
    auto s = section("arch");
    s.text("layers", c.arch);
    s.real("init_gain", c.init_gain);
    s.finish();
  }
  {
    auto s = section("snn");
    s.real("beta", c.lif.beta);
    s.real("u_thr", c.lif.u_thr);
    s.size("t_steps", c.lif.t_steps);
    s.real("surrogate_alpha", c.lif.surrogate_alpha);
    s.read("readout", c.readout, parse_readout);
    s.finish();
  }
  {
    auto s = section("cat");
    s.size("m", c.cat_m);
    s.integer("bits", c.cat_bits);
    s.real("beta_commit", c.beta_commit);
    s.read("quant_mode", c.quant_mode, parse_quant_mode);
    s.boolean("codebook_task_grad", c.codebook_task_grad);
    s.boolean("reseed_dead_levels", c.reseed_dead_levels);
    s.finish();
  }
  {
    auto s = section("prune");
    s.read("criterion", c.prune_criterion, parse_criterion);
    s.real("ratio", c.prune_ratio);
    s.size("calib_batches", c.calib_batches);
    s.finish();
  }
  {
    auto s = section("ternary");
    s.real("threshold_frac", c.ternary_threshold);
    s.finish();
  }
  {
    auto s = section("qat");
    s.integer("bits", c.qat_bits);
    s.finish();
  }
  {
    auto s = section("cluster");
    s.size("m", c.cluster_m);
    s.integer("bits", c.cluster_bits);
    s.real("finetune_frac", c.cluster_finetune_frac);
    s.finish();
  }
  {
    auto s = section("eval");
    s.size("repeats", c.eval_repeats);
    s.size("latency_batches", c.latency_batches);
    s.read("size_mode", c.size_mode, parse_size_mode);
    s.text("profile", c.profile);
    s.text("profile_file", c.profile_file);
    s.real("e_mac_pj", c.energy.e_mac_pj);
    s.real("e_ac_pj", c.energy.e_ac_pj);
    s.real("spike_rate", c.energy.spike_rate);
    s.finish();
  }

  std::set<std::string> referenced;
  {
    auto s = section("pipeline");
    if (auto list = s.raw("stages")) {
      c.stages.clear();
      for (const auto& name : split_list(*list)) {
        if (!referenced.insert(name).second) throw ParseError("[pipeline] stages: '" + name + "' listed twice");
        const auto it = tree.find("stage." + name);
        if (it == tree.not_found()) throw ParseError("[pipeline] stages: no section [stage." + name + "]");
        StageConfig st;
        st.name = name;
        Section ss("stage." + name, &it->second);
        auto kind = ss.raw("kind");
        if (!kind) throw ParseError("[stage." + name + "]: missing key 'kind'");
        try {
          st.kind = parse_stage_kind(*kind);
        } catch (const ParseError& e) {
          throw ParseError("[stage." + name + "] kind: " + e.what());
        }
        ss.size("epochs", st.epochs);
        ss.real("lr", st.lr);
        ss.real("weight_decay", st.weight_decay);
        ss.read("m", st.m, [](const std::string& v) -> std::optional<std::size_t> {
          if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
          return std::stoull(v);
        });
        ss.read("bits", st.bits, [](const std::string& v) -> std::optional<int> { return std::stoi(v); });
        ss.read("ratio", st.ratio, [](const std::string& v) -> std::optional<double> { return std::stod(v); });
        ss.read("criterion", st.criterion, [](const std::string& v) -> std::optional<Criterion> { return parse_criterion(v); });
        ss.read("activation", st.activation,
                [](const std::string& v) -> std::optional<Activation> { return parse_activation(v); });
        ss.finish();
        c.stages.push_back(st);
      }
    }
    s.finish();
  }
  for (const auto& [name, body] : tree) {
    (void)body;
    if (name.rfind("stage.", 0) == 0 && !referenced.count(name.substr(6)))
      throw ParseError("config: section [" + name + "] is not listed in [pipeline] stages");
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void PipelineConfig::validate() const {
  if (stages.empty()) throw ContractError("pipeline needs at least one stage");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (eval_repeats == 0) throw ContractError("eval repeats must be at least 1");
  if (latency_batches == 0) throw ContractError("latency_batches must be at least 1");
  if (data.kind != "synthetic" && data.kind != "idx") throw ContractError("data kind must be synthetic or idx");
  if (data.kind == "idx" && (data.train_images.empty() || data.train_labels.empty() || data.test_images.empty() ||
                             data.test_labels.empty()))
    throw ContractError("idx data needs train_images, train_labels, test_images and test_labels");
  lif.validate();
  if (cat_m < 2) throw ContractError("cat m must be at least 2");
  auto check_bits = [](int b, const char* what) {
    if (b != 2 && b != 4 && b != 8) throw ContractError(std::string(what) + " bits must be 2, 4 or 8");
  };
  check_bits(cat_bits, "cat");
  check_bits(qat_bits, "qat");
  check_bits(cluster_bits, "cluster");
  if (cluster_m < 1) throw ContractError("cluster m must be positive");
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) throw ContractError("prune ratio must lie in [0, 1)");
  if (calib_batches == 0) throw ContractError("calib_batches must be positive");
  if (!(ternary_threshold > 0.0 && ternary_threshold < 1.0)) throw ContractError("ternary threshold_frac must lie in (0, 1)");
  if (!(cluster_finetune_frac >= 0.0 && cluster_finetune_frac <= 1.0))
    throw ContractError("cluster finetune_frac must lie in [0, 1]");
  if (!(beta_commit >= 0.0)) throw ContractError("beta_commit must be non-negative");
  EnergyModel em = energy;
  em.timesteps = lif.t_steps;
  em.validate();
  std::set<std::string> names;
  for (const auto& s : stages) {
    if (s.name.empty() || !names.insert(s.name).second) throw ContractError("stage names must be unique and non-empty");
    if (s.epochs > 0 && !(s.lr > 0.0)) throw ContractError("stage " + s.name + ": lr must be positive");
    if (s.weight_decay < 0.0) throw ContractError("stage " + s.name + ": weight_decay must be non-negative");
    if (s.bits) check_bits(*s.bits, ("stage " + s.name).c_str());
    if (s.ratio && !(*s.ratio >= 0.0 && *s.ratio < 1.0)) throw ContractError("stage " + s.name + ": ratio must lie in [0, 1)");
    if (s.m && *s.m < 1) throw ContractError("stage " + s.name + ": m must be positive");
  }
  if (data.kind == "synthetic")
    Architecture::parse(arch, Shape{data.synthetic.channels, data.synthetic.height, data.synthetic.width}).validate();
}

std::string PipelineConfig::to_ini() const {
  std::string o;
  auto line = [&o](const char* key, const auto& value) { o += fmt::format("{} = {}\n", key, value); };
  o += "[run]\n";
  line("seed", seed);
  line("batch_size", batch_size);
  o += "\n[data]\n";
  line("kind", data.kind);
  line("classes", data.synthetic.classes);
  line("channels", data.synthetic.channels);
  line("height", data.synthetic.height);
  line("width", data.synthetic.width);
  line("noise", data.synthetic.noise);
  line("train_per_class", data.synthetic.train_per_class);
  line("test_per_class", data.synthetic.test_per_class);
  if (data.kind == "idx") {
    line("train_images", data.train_images);
    line("train_labels", data.train_labels);
    line("test_images", data.test_images);
    line("test_labels", data.test_labels);
  }
  o += "\n[arch]\n";
  line("layers", arch);
  line("init_gain", init_gain);
  o += "\n[snn]\n";
  line("beta", lif.beta);
  line("u_thr", lif.u_thr);
  line("t_steps", lif.t_steps);
  line("surrogate_alpha", lif.surrogate_alpha);
  line("readout", to_string(readout));
  o += "\n[cat]\n";
  line("m", cat_m);
  line("bits", cat_bits);
  line("beta_commit", beta_commit);
  line("quant_mode", to_string(quant_mode));
  line("codebook_task_grad", codebook_task_grad);
  line("reseed_dead_levels", reseed_dead_levels);
  o += "\n[prune]\n";
  line("criterion", to_string(prune_criterion));
  line("ratio", prune_ratio);
  line("calib_batches", calib_batches);
  o += "\n[ternary]\n";
  line("threshold_frac", ternary_threshold);
  o += "\n[qat]\n";
  line("bits", qat_bits);
  o += "\n[cluster]\n";
  line("m", cluster_m);
  line("bits", cluster_bits);
  line("finetune_frac", cluster_finetune_frac);
  o += "\n[eval]\n";
  line("repeats", eval_repeats);
  line("latency_batches", latency_batches);
  line("size_mode", to_string(size_mode));
  line("profile", profile);
  if (!profile_file.empty()) line("profile_file", profile_file);
  line("e_mac_pj", energy.e_mac_pj);
  line("e_ac_pj", energy.e_ac_pj);
  line("spike_rate", energy.spike_rate);
  o += "\n[pipeline]\nstages = ";
  for (std::size_t i = 0; i < stages.size(); ++i) o += (i ? "," : "") + stages[i].name;
  o += "\n";
  for (const auto& s : stages) {
    o += "\n[stage." + s.name + "]\n";
    line("kind", to_string(s.kind));
    line("epochs", s.epochs);
    line("lr", s.lr);
    line("weight_decay", s.weight_decay);
    if (s.m) line("m", *s.m);
    if (s.bits) line("bits", *s.bits);
    if (s.ratio) line("ratio", *s.ratio);
    if (s.criterion) line("criterion", to_string(*s.criterion));
    if (s.activation) line("activation", to_string(*s.activation));
  }
  return o;
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_ini()); }

Architecture PipelineConfig::architecture(const Shape& input) const {
  Architecture a = Architecture::parse(arch, input);
  a.validate();
  return a;
}

const StageConfig& PipelineConfig::stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return s;
  throw ContractError("no stage named '" + name + "'");
}

}  // namespace catsnn
