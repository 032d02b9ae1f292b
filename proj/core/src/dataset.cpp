#include "catsnn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>

namespace catsnn {

Tensor Dataset::batch_images(std::span<const std::size_t> indices) const {
  const std::size_t inner = images.size() / images.dim(0);
  Shape shape = images.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t b = 0; b < indices.size(); ++b)
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(indices[b] * inner), inner,
                out.data().begin() + static_cast<std::ptrdiff_t>(b * inner));
  return out;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  return Dataset{batch_images(indices), batch_labels(indices), classes};
}

std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2) throw ContractError("synthetic dataset needs at least two classes");
  if (spec.noise < 0.0) throw ContractError("synthetic noise must be non-negative");
  const Shape sample{spec.channels, spec.height, spec.width};
  const std::size_t inner = shape_numel(sample);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> templates(spec.classes, std::vector<double>(inner));
  for (auto& t : templates)
    for (auto& v : t) v = unit(rng);

  auto draw = [&](std::size_t per_class, std::uint64_t stream) {
    std::mt19937_64 noise_rng(seed ^ (0x9E3779B97F4A7C15ULL * stream));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = per_class * spec.classes;
    Dataset d;
    d.classes = spec.classes;
    Shape shape{n};
    shape.insert(shape.end(), sample.begin(), sample.end());
    d.images = Tensor(shape);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % spec.classes);
      d.labels[i] = label;
      for (std::size_t j = 0; j < inner; ++j) {
        const double v = templates[static_cast<std::size_t>(label)][j] + spec.noise * gauss(noise_rng);
        d.images[i * inner + j] = std::clamp(v, 0.0, 1.0);
      }
    }
    return d;
  };
  return {draw(spec.train_per_class, 1), draw(spec.test_per_class, 2)};
}

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  auto fail = [](std::size_t offset, const std::string& what) {
    throw ParseError("IDX parse error at offset " + std::to_string(offset) + ": " + what);
  };
  if (bytes.size() < 4) fail(0, "truncated magic number");
  if (bytes[0] != 0 || bytes[1] != 0) fail(0, "magic number must start with two zero bytes");
  if (bytes[2] != 0x08) fail(2, "unsupported element type (only unsigned byte 0x08)");
  const std::size_t ndims = bytes[3];
  if (ndims == 0) fail(3, "zero dimensions");
  if (bytes.size() < 4 + 4 * ndims) fail(4, "truncated dimension table");
  IdxArray out;
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::size_t o = 4 + 4 * d;
    const std::size_t v = (std::size_t{bytes[o]} << 24) | (std::size_t{bytes[o + 1]} << 16) |
                          (std::size_t{bytes[o + 2]} << 8) | std::size_t{bytes[o + 3]};
    if (v == 0) fail(o, "zero-length dimension");
    out.dims.push_back(v);
    total *= v;
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() - header != total)
    fail(header, "payload holds " + std::to_string(bytes.size() - header) + " bytes, header promises " +
                     std::to_string(total));
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

IdxArray read_idx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open IDX file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
  const auto images = read_idx_file(images_path);
  const auto labels = read_idx_file(labels_path);
  if (images.dims.size() != 3) throw ParseError("IDX images must be 3-D (magic 0x00000803): " + images_path);
  if (labels.dims.size() != 1) throw ParseError("IDX labels must be 1-D (magic 0x00000801): " + labels_path);
  if (images.dims[0] != labels.dims[0]) throw ParseError("IDX image and label counts differ");
  Dataset d;
  d.images = Tensor(Shape{images.dims[0], 1, images.dims[1], images.dims[2]});
  for (std::size_t i = 0; i < images.data.size(); ++i) d.images[i] = images.data[i] / 255.0;
  int max_label = 0;
  for (auto l : labels.data) {
    d.labels.push_back(static_cast<int>(l));
    max_label = std::max(max_label, static_cast<int>(l));
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

}  // namespace catsnn
