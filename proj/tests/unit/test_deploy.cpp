#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "catsnn/dataset.hpp"
#include "catsnn/deploy.hpp"

using namespace catsnn;
namespace fs = std::filesystem;

namespace {

Model desk_model(std::uint64_t seed) {
  auto arch = Architecture::parse("conv:4:3:1:1,lif,avgpool:2,flatten,dense:3", Shape{2, 4, 4});
  return init_model(arch, LifConfig{}, seed, 2.0);
}

// Every layer constrained to a 4-level codebook quantized at b bits.
Model cat_model(std::uint64_t seed, int bits = 8) {
  Model m = desk_model(seed);
  for (auto& w : m.weights) {
    Codebook cb = quantize_codebook(Codebook{.levels = {-0.6, -0.2, 0.2, 0.6}}, bits,
                                    CodebookQuantMode::ResolutionPreserving);
    cb.levels = cb.reconstructed_levels();
    w.payload = CatPayload{cb, assign(w.latent, cb.levels).index};
  }
  return m;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("catsnn_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Metrics, PerfectAndAllWrong) {
  auto p = classification_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  EXPECT_EQ(p.accuracy, 1.0);
  EXPECT_EQ(p.macro_f1, 1.0);
  EXPECT_EQ(p.macro_precision, 1.0);
  EXPECT_EQ(p.macro_recall, 1.0);
  auto w = classification_metrics({1, 1, 1}, {0, 0, 0}, 2);
  EXPECT_EQ(w.accuracy, 0.0);
  EXPECT_EQ(w.macro_f1, 0.0);
  EXPECT_THROW(classification_metrics({}, {}, 2), ContractError);
}

TEST(Metrics, TwoClassConfusionByHand) {
  // confusion [[2,1],[0,1]] (rows = true class)
  auto m = classification_metrics({0, 0, 1, 1}, {0, 0, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  const double f0 = 2 * 1.0 * (2.0 / 3) / (1.0 + 2.0 / 3);  // 0.8
  const double f1 = 2 * 0.5 * 1.0 / (0.5 + 1.0);            // 2/3
  EXPECT_NEAR(m.macro_f1, (f0 + f1) / 2, 1e-15);
  EXPECT_NEAR(m.macro_precision, 0.75, 1e-15);
  EXPECT_NEAR(m.macro_recall, (2.0 / 3 + 1.0) / 2, 1e-15);
}

TEST(Energy, MacAndAcExamples) {
  // 1000-input dense head on a real-valued input: 1000 MACs.
  auto mac = init_model(Architecture::parse("flatten,dense:1", Shape{1000, 1, 1}), LifConfig{}, 1);
  EXPECT_NEAR(energy_mj(mac, EnergyModel{}), 4.6e-6, 1e-18);
  // 10 MACs into a LIF layer, then 10 x 100 spike-driven ACs.
  auto ac = init_model(Architecture::parse("flatten,dense:10,lif,dense:100", Shape{1, 1, 1}), LifConfig{}, 1);
  const auto ops = layer_op_counts(ac);
  ASSERT_EQ(ops.size(), 2u);
  EXPECT_FALSE(ops[0].spiking_input);
  EXPECT_TRUE(ops[1].spiking_input);
  EXPECT_EQ(ops[1].ops, 1000u);
  EnergyModel em{.spike_rate = 0.2, .timesteps = 4};
  EXPECT_NEAR(energy_mj(ac, em), 10 * 4.6e-9 + 7.2e-7, 1e-18);
  const std::vector<double> rates{0.0};
  EXPECT_NEAR(energy_mj(ac, em, &rates), 10 * 4.6e-9, 1e-18);
  const std::vector<double> wrong{0.1, 0.2};
  EXPECT_THROW(energy_mj(ac, em, &wrong), DimensionError);
}

TEST(Energy, ConvOpsCountSpatialPositions) {
  Model m = desk_model(1);
  const auto ops = layer_op_counts(m);
  EXPECT_EQ(ops[0].ops, 4u * 2 * 3 * 3 * 16);
  EXPECT_EQ(ops[1].ops, 3u * 16);
  EXPECT_EQ(synapse_count(m), ops[0].ops + ops[1].ops);
  EXPECT_EQ(neuron_count(m), 4u * 16 + 3);
}

TEST(Energy, MeasuredRatesAreFractions) {
  Model m = desk_model(2);
  auto [train, test] = make_synthetic({.channels = 2, .height = 4, .width = 4, .train_per_class = 4, .test_per_class = 4}, 1);
  auto rates = measure_spike_rates(m, test.images);
  ASSERT_EQ(rates.size(), 1u);
  EXPECT_GE(rates[0], 0.0);
  EXPECT_LE(rates[0], 1.0);
}

TEST(Size, Formula) {
  EXPECT_DOUBLE_EQ(model_size_mb(1000000, 8), 1.0);
  EXPECT_DOUBLE_EQ(model_size_mb(8000000, 1), 1.0);
  EXPECT_NEAR(model_size_mb(14720000, 8), 14.72, 1e-12);
  EXPECT_THROW(model_size_mb(0, 8), ContractError);
  Model m = cat_model(3);
  const double p = double(m.parameter_count());
  EXPECT_DOUBLE_EQ(model_size_mb(m, SizeMode::PayloadBits), p * 8 / 8e6);
  EXPECT_DOUBLE_EQ(model_size_mb(m, SizeMode::IndexCodebook), (p * 2 + 2 * 4 * 8) / 8e6);
  EXPECT_DOUBLE_EQ(model_size_mb(desk_model(1)), p * 32 / 8e6);
  EXPECT_EQ(parse_size_mode(to_string(SizeMode::IndexCodebook)), SizeMode::IndexCodebook);
}

TEST(Latency, PositiveAndContract) {
  Model m = desk_model(2);
  auto [train, test] = make_synthetic({.channels = 2, .height = 4, .width = 4, .train_per_class = 4, .test_per_class = 4}, 1);
  EXPECT_GT(latency_s(m, test, 2, 4), 0.0);
  EXPECT_THROW(latency_s(m, test, 0, 4), ContractError);
}

TEST(DeployRatio, HandExampleAndErrors) {
  EXPECT_EQ(deploy_ratio(0.9, 0.1, 0.5, 2.0), 9.0);
  EXPECT_THROW(deploy_ratio(0.9, 0.0, 0.5, 2.0), ContractError);
  EXPECT_THROW(deploy_ratio(0.9, 0.1, -1.0, 2.0), ContractError);
  EXPECT_THROW(deploy_ratio(1.5, 0.1, 0.5, 2.0), ContractError);
  auto d = make_deploy_metrics(0.9, 0.8, 0.1, 0.5, 2.0);
  EXPECT_EQ(d.dr_acc, 9.0);
  EXPECT_DOUBLE_EQ(d.dr_f1, 0.8 / 0.1);
}

TEST(DeployRatio, Monotone) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double p = u(rng), l = u(rng), e = u(rng), s = u(rng), f = 1.0 + u(rng);
    const double base = deploy_ratio(p, l, e, s);
    EXPECT_LT(deploy_ratio(p, l * f, e, s), base);
    EXPECT_LT(deploy_ratio(p, l, e * f, s), base);
    EXPECT_LT(deploy_ratio(p, l, e, s * f), base);
    EXPECT_GT(deploy_ratio(p * 0.5, l, e, s), 0.0);
    EXPECT_LT(deploy_ratio(p * 0.5, l, e, s), base);
  }
}

TEST(Profiles, BuiltinCatalogAndParsing) {
  const auto tn = find_profile("truenorth-like");
  EXPECT_EQ(tn.max_unique_states, 4u);
  EXPECT_EQ(find_profile("generic-8bit").max_unique_states, 256u);
  EXPECT_THROW(find_profile("nope"), ParseError);
  const auto extra = parse_profiles(
      "[profile.tiny]\nmax_unique_states = 2\nallowed_bits = 2, 4\nmax_neurons = 10\nmax_synapses = 100\n");
  ASSERT_EQ(extra.size(), 1u);
  EXPECT_EQ(extra[0].allowed_bits, (std::vector<int>{2, 4}));
  EXPECT_EQ(find_profile("tiny", extra).max_neurons, 10u);
  EXPECT_THROW(parse_profiles("[profile.x]\nmax_unique_states = 2\nbogus = 1\n"), ParseError);
  EXPECT_THROW(parse_profiles("[profile.x\n"), ParseError);
}

TEST(Profiles, CatModelPassesTrueNorth) {
  auto rep = validate_profile(cat_model(4), find_profile("truenorth-like"));
  EXPECT_TRUE(rep.passed()) << rep.to_table();
  EXPECT_EQ(rep.to_csv().rfind("profile,check,", 0), 0u) << rep.to_csv();
}

TEST(Profiles, FiveLevelsFail) {
  Model m = cat_model(4);
  auto& cat = std::get<CatPayload>(m.weights[0].payload);
  Codebook cb = quantize_codebook(Codebook{.levels = {-0.6, -0.3, 0.0, 0.3, 0.6}}, 8,
                                  CodebookQuantMode::ResolutionPreserving);
  cb.levels = cb.reconstructed_levels();
  cat = CatPayload{cb, assign(m.weights[0].latent, cb.levels).index};
  ASSERT_EQ(unique_weight_count(m.weights[0]), 5u);
  auto rep = validate_profile(m, find_profile("truenorth-like"));
  EXPECT_FALSE(rep.passed());
  bool saw = false;
  for (const auto& c : rep.checks)
    if (c.check == "unique_states" && c.layer == std::optional<std::size_t>(0)) saw = !c.passed;
  EXPECT_TRUE(saw) << rep.to_table();
}

TEST(Profiles, FloatModelFailsBitwidth) {
  auto rep = validate_profile(desk_model(1), find_profile("generic-8bit"));
  EXPECT_FALSE(rep.passed());
  bool bit_fail = false;
  for (const auto& c : rep.checks) bit_fail = bit_fail || (c.check == "bitwidth" && !c.passed);
  EXPECT_TRUE(bit_fail);
}

TEST(Lut, IndexBits) {
  EXPECT_EQ(index_bits_for(1), 1u);
  EXPECT_EQ(index_bits_for(2), 1u);
  EXPECT_EQ(index_bits_for(4), 2u);
  EXPECT_EQ(index_bits_for(5), 3u);
  EXPECT_EQ(index_bits_for(256), 8u);
}

TEST(Lut, RoundTripReproducesEffectiveWeights) {
  Model m = cat_model(6);
  const auto lut = build_lut(m, find_profile("truenorth-like"));
  ASSERT_EQ(lut.layers.size(), m.weights.size());
  const auto bytes = encode_lut(lut);
  const auto back = decode_lut(bytes);
  std::size_t params = 0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    EXPECT_EQ(back.layers[k].index_bits, 2u);
    EXPECT_EQ(back.layers[k].kind, LutKind::IntegerCodebook);
    EXPECT_EQ(back.layers[k].effective(), effective_weights(m.weights[k]));
    params += m.weights[k].latent.size();
  }
  // 2-bit indices plus a small fixed overhead per layer.
  const double payload = double(params) * 2 / 8;
  EXPECT_GE(double(bytes.size()), payload);
  EXPECT_LE(double(bytes.size()), payload + 200.0 * double(m.weights.size()));
}

TEST(Lut, RejectsCorruptionAndOversizedTables) {
  Model m = cat_model(6);
  auto bytes = encode_lut(build_lut(m, find_profile("truenorth-like")));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_lut(truncated), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_lut(trailing), ParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_lut(bad_magic), ParseError);
  try {
    build_lut(desk_model(1), find_profile("truenorth-like"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos);
  }
}

TEST(Lut, ExportWritesManifest) {
  const auto dir = temp_dir("lut");
  Model m = cat_model(7);
  const auto path = (dir / "model.lut").string();
  export_lut(m, find_profile("truenorth-like"), path);
  const auto back = read_lut(path);
  EXPECT_EQ(back.layers.size(), 2u);
  std::ifstream f(path + ".json");
  ASSERT_TRUE(f.good());
  const auto j = nlohmann::json::parse(f);
  EXPECT_EQ(j["layers"].size(), 2u);
  EXPECT_TRUE(j["layers"][0].contains("quant_mode"));
  fs::remove_all(dir);
}
