#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "catsnn/config.hpp"
#include "catsnn/dataset.hpp"
#include "catsnn/model_io.hpp"

using namespace catsnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("catsnn_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

std::vector<std::uint8_t> idx_header(std::uint8_t rank, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> out{0, 0, 0x08, rank};
  for (auto d : dims)
    for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(d >> s));
  return out;
}

Model mixed_model() {
  auto arch = Architecture::parse("conv:3:3:1:1,lif,avgpool:2,conv:4:3:1:1,lif,flatten,dense:2", Shape{2, 4, 4});
  Model m = init_model(arch, LifConfig{.beta = 0.6, .t_steps = 3}, 21);
  Codebook cb = quantize_codebook(Codebook{.levels = {-0.4, -0.1, 0.1, 0.4}}, 8);
  m.weights[0].payload = CatPayload{cb, assign(m.weights[0].latent, cb.levels).index};
  m.weights[1].payload = ClusterPayload{{-0.2, 0.3}, std::vector<std::int32_t>(m.weights[1].latent.size(), 1), 8};
  m.weights[2].payload = TernaryPayload{0.7, 0.4, 0.05};
  m.provenance = {"fp32-train epochs=3", "cat m=4"};
  m.config_hash = 0x1234abcdULL;
  m.readout = Readout::Sum;
  return m;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  auto cfg = PipelineConfig::defaults();
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.cat_m, 4u);
  EXPECT_DOUBLE_EQ(cfg.beta_commit, 0.5);
  EXPECT_DOUBLE_EQ(cfg.prune_ratio, 0.3);
  EXPECT_DOUBLE_EQ(cfg.lif.beta, 0.5);
  EXPECT_EQ(cfg.lif.t_steps, 4u);
  EXPECT_EQ(cfg.stages.front().kind, StageKind::Fp32Train);
  EXPECT_EQ(cfg.stages.back().kind, StageKind::Export);
}

TEST(Config, ParseOverridesAndRoundTrip) {
  auto cfg = PipelineConfig::parse(
      "[run]\nseed = 9\n[cat]\nm = 2\nquant_mode = resolution-preserving\n[prune]\ncriterion = sca\n"
      "[pipeline]\nstages = a,b\n[stage.a]\nkind = fp32-train\nepochs = 2\n[stage.b]\nkind = cat\nepochs = 1\nm = 2\n");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.cat_m, 2u);
  EXPECT_EQ(cfg.quant_mode, CodebookQuantMode::ResolutionPreserving);
  EXPECT_EQ(cfg.prune_criterion, Criterion::Sca);
  ASSERT_EQ(cfg.stages.size(), 2u);
  EXPECT_EQ(cfg.stage("b").m, std::optional<std::size_t>(2));
  const auto again = PipelineConfig::parse(cfg.to_ini());
  EXPECT_EQ(again.to_ini(), cfg.to_ini());
  EXPECT_EQ(again.hash(), cfg.hash());
  EXPECT_NE(PipelineConfig::defaults().hash(), cfg.hash());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(PipelineConfig::parse("[run]\nsed = 1\n"), ParseError);
  EXPECT_THROW(PipelineConfig::parse("[runn]\nseed = 1\n"), ParseError);
  EXPECT_THROW(PipelineConfig::parse("[prune]\nratio = 1.5\n"), ParseError);
  EXPECT_THROW(PipelineConfig::parse("[cat]\nbits = 3\n"), ParseError);
  EXPECT_THROW(PipelineConfig::parse("[run]\nseed = abc\n"), ParseError);
  EXPECT_THROW(PipelineConfig::parse("[pipeline]\nstages = x\n"), ParseError);
  EXPECT_THROW(PipelineConfig::parse("[pipeline]\nstages = x\n[stage.x]\nkind = fp32-train\n[stage.y]\nkind = cat\n"),
               ParseError);
  EXPECT_THROW(PipelineConfig::load("/nonexistent/config.ini"), ParseError);
}

TEST(Config, ArchitectureFromText) {
  auto cfg = PipelineConfig::defaults();
  auto arch = cfg.architecture(Shape{3, 8, 8});
  EXPECT_EQ(arch.to_text(), cfg.arch);
  EXPECT_EQ(Architecture::parse(arch.to_text(), arch.input), arch);
  EXPECT_THROW(Architecture::parse("conv:4:3,lif,bogus:1", Shape{3, 8, 8}), ParseError);
}

TEST(ModelIo, RoundTripIsExactAndByteStable) {
  const Model m = mixed_model();
  const auto bytes = encode_model(m);
  const Model back = decode_model(bytes);
  EXPECT_EQ(encode_model(back), bytes);
  EXPECT_EQ(back.arch, m.arch);
  EXPECT_EQ(back.provenance, m.provenance);
  EXPECT_EQ(back.config_hash, m.config_hash);
  EXPECT_EQ(back.readout, Readout::Sum);
  EXPECT_DOUBLE_EQ(back.lif.beta, 0.6);
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    EXPECT_EQ(back.weights[k].latent, m.weights[k].latent);
    EXPECT_EQ(effective_weights(back.weights[k]), effective_weights(m.weights[k]));
    EXPECT_EQ(back.weights[k].payload.index(), m.weights[k].payload.index());
  }
  const auto dir = temp_dir("modelio");
  save_model(m, (dir / "a.csnn").string());
  save_model(load_model((dir / "a.csnn").string()), (dir / "b.csnn").string());
  std::ifstream a(dir / "a.csnn", std::ios::binary), b(dir / "b.csnn", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
  fs::remove_all(dir);
}

TEST(ModelIo, RejectsCorruptInput) {
  const auto bytes = encode_model(mixed_model());
  auto cut = bytes;
  cut.resize(bytes.size() / 2);
  EXPECT_THROW(decode_model(cut), ParseError);
  auto magic = bytes;
  magic[1] = 'x';
  EXPECT_THROW(decode_model(magic), ParseError);
  EXPECT_THROW(decode_model(std::vector<std::uint8_t>{}), ParseError);
  EXPECT_THROW(load_model("/nonexistent/model.csnn"), ParseError);
}

TEST(Synthetic, ZeroNoiseAndBalance) {
  SyntheticSpec spec{.classes = 3, .channels = 1, .height = 2, .width = 2, .noise = 0.0, .train_per_class = 5,
                     .test_per_class = 2};
  auto [train, test] = make_synthetic(spec, 3);
  EXPECT_EQ(train.size(), 15u);
  EXPECT_EQ(test.size(), 6u);
  std::vector<int> counts(3, 0);
  for (int l : train.labels) ++counts[std::size_t(l)];
  EXPECT_EQ(counts, (std::vector<int>{5, 5, 5}));
  // sigma = 0: every sample of a class is its template.
  const std::size_t per = 4;
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t j = 0; j < train.size(); ++j)
      if (train.labels[i] == train.labels[j])
        for (std::size_t k = 0; k < per; ++k) EXPECT_EQ(train.images[i * per + k], train.images[j * per + k]);
  auto [again, unused] = make_synthetic(spec, 3);
  EXPECT_EQ(again.images, train.images);
}

TEST(Idx, HandBuiltTwoImageFile) {
  auto img = idx_header(3, {2, 2, 3});
  for (std::uint8_t v : {0, 51, 102, 153, 204, 255, 255, 0, 255, 0, 255, 0}) img.push_back(v);
  auto lab = idx_header(1, {2});
  lab.push_back(1);
  lab.push_back(0);
  auto arr = parse_idx(img);
  EXPECT_EQ(arr.dims, (std::vector<std::size_t>{2, 2, 3}));
  EXPECT_EQ(arr.data.size(), 12u);
  const auto dir = temp_dir("idx");
  write_bytes(dir / "img.idx", img);
  write_bytes(dir / "lab.idx", lab);
  auto ds = load_idx_dataset((dir / "img.idx").string(), (dir / "lab.idx").string());
  EXPECT_EQ(ds.images.shape(), (Shape{2, 1, 2, 3}));
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(ds.classes, 2u);
  EXPECT_DOUBLE_EQ(ds.images[1], 0.2);
  EXPECT_DOUBLE_EQ(ds.images[5], 1.0);
  fs::remove_all(dir);
}

TEST(Idx, MalformedInput) {
  auto img = idx_header(3, {2, 2, 3});
  EXPECT_THROW(parse_idx(img), ParseError);  // payload missing
  std::vector<std::uint8_t> bad{1, 0, 8, 1, 0, 0, 0, 0};
  EXPECT_THROW(parse_idx(bad), ParseError);
  std::vector<std::uint8_t> float_type{0, 0, 0x0D, 1, 0, 0, 0, 0};
  EXPECT_THROW(parse_idx(float_type), ParseError);
}
