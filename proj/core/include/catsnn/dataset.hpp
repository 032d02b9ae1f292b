#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "catsnn/tensor.hpp"

namespace catsnn {

/// In-memory labelled image set, images N x C x H x W in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  Tensor batch_images(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.5;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
};

/// K random templates in [0,1]; samples are clamp(template + N(0, noise^2), 0, 1).
/// Labels cycle through the classes, so every class gets exactly n samples.
std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Raw IDX array (big-endian header, unsigned-byte payload).
struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
IdxArray read_idx_file(const std::string& path);

/// Pair an IDX image file (0x00000803) with an IDX label file (0x00000801).
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);

}  // namespace catsnn
