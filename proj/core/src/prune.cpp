#include "catsnn/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "catsnn/ops.hpp"
#include "catsnn/trainer.hpp"

namespace catsnn {

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::Fsc: return "fsc";
    case Criterion::Sca: return "sca";
    case Criterion::Magnitude: return "mag";
    case Criterion::Oracle: return "oracle";
  }
  return "fsc";
}

Criterion parse_criterion(const std::string& text) {
  if (text == "fsc") return Criterion::Fsc;
  if (text == "sca") return Criterion::Sca;
  if (text == "mag" || text == "magnitude") return Criterion::Magnitude;
  if (text == "oracle") return Criterion::Oracle;
  throw ParseError("unknown pruning criterion '" + text + "'");
}

namespace {

struct RecordDims {
  std::size_t n, t, c, inner;
};

RecordDims dims_of(const Tensor& y) {
  if (y.rank() < 3) throw DimensionError("activity record must be N x T x C x ..., got " + to_string(y.shape()));
  const std::size_t n = y.dim(0), t = y.dim(1), c = y.dim(2);
  return {n, t, c, y.size() / (n * t * c)};
}

}  // namespace

void FscAccumulator::add(const ActivityRecord& rec) {
  if (!rec.delta) throw StateError("fsc_scores: activity record has no backpropagated delta");
  if (rec.delta->shape() != rec.y.shape()) throw DimensionError("fsc_scores: y and delta shapes differ");
  const auto d = dims_of(rec.y);
  if (sums_.empty()) sums_.assign(d.c, 0.0);
  if (sums_.size() != d.c) throw DimensionError("fsc_scores: channel count changed between batches");
  const Tensor& delta = *rec.delta;
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t t = 0; t < d.t; ++t)
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t base = ((b * d.t + t) * d.c + c) * d.inner;
        double acc = 0.0;
        for (std::size_t i = 0; i < d.inner; ++i) {
          const double dy = delta[base + i] * rec.y[base + i];
          acc += dy * dy;
        }
        sums_[c] += acc;
      }
  samples_ += d.n;
  ++batches_;
}

ChannelSaliency FscAccumulator::scores(std::size_t layer) const {
  if (samples_ == 0) throw StateError("fsc_scores: no calibration batches accumulated");
  ChannelSaliency s{layer, sums_, Criterion::Fsc, batches_};
  for (auto& v : s.scores) v /= static_cast<double>(samples_);
  return s;
}

ChannelSaliency fsc_scores(const ActivityRecord& rec, std::size_t layer) {
  FscAccumulator acc;
  acc.add(rec);
  return acc.scores(layer);
}

ChannelSaliency sca_scores(const ActivityRecord& rec, std::size_t layer) {
  const auto d = dims_of(rec.y);
  ChannelSaliency s{layer, std::vector<double>(d.c, 0.0), Criterion::Sca, 1};
  for (std::size_t b = 0; b < d.n; ++b)
    for (std::size_t t = 0; t < d.t; ++t)
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t base = ((b * d.t + t) * d.c + c) * d.inner;
        for (std::size_t i = 0; i < d.inner; ++i) s.scores[c] += rec.y[base + i];
      }
  for (auto& v : s.scores) v /= static_cast<double>(d.n * d.t * d.inner);
  return s;
}

ChannelSaliency magnitude_scores(const Tensor& layer_weights, std::size_t layer) {
  const std::size_t c = layer_weights.dim(0);
  const std::size_t inner = layer_weights.size() / c;
  ChannelSaliency s{layer, std::vector<double>(c, 0.0), Criterion::Magnitude, 0};
  for (std::size_t o = 0; o < c; ++o)
    for (std::size_t i = 0; i < inner; ++i) s.scores[o] += std::abs(layer_weights[o * inner + i]);
  return s;
}

namespace {

std::size_t lif_ordinal(const Model& model, std::size_t weight_slot) {
  const auto spiking = model.spiking_weight_layers();
  const auto it = std::find(spiking.begin(), spiking.end(), weight_slot);
  if (it == spiking.end()) throw ContractError("weight layer " + std::to_string(weight_slot) + " does not feed a LIF layer");
  return static_cast<std::size_t>(it - spiking.begin());
}

std::vector<Tensor> all_ones_masks(const Model& model) {
  std::vector<Tensor> masks;
  for (auto k : model.spiking_weight_layers()) masks.emplace_back(Shape{model.arch.layers[model.weights[k].layer_index].out}, 1.0);
  return masks;
}

}  // namespace

ChannelSaliency oracle_scores(const Model& model, const Dataset& calib, std::size_t layer) {
  const std::size_t lif = lif_ordinal(model, layer);
  const double base = dataset_loss(model, calib);
  auto masks = all_ones_masks(model);
  ChannelSaliency s{layer, {}, Criterion::Oracle, 0};
  for (std::size_t c = 0; c < masks[lif].size(); ++c) {
    masks[lif][c] = 0.0;
    s.scores.push_back(dataset_loss(model, calib, &masks) - base);
    masks[lif][c] = 1.0;
  }
  return s;
}

Dataset calibration_set(const Dataset& train, std::size_t calib_batches, std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), calib_batches * batch_size));
  return train.subset(order);
}

std::vector<ChannelSaliency> compute_saliency(const Model& model, const Dataset& calib, Criterion criterion,
                                              std::size_t batch_size) {
  const auto spiking = model.spiking_weight_layers();
  std::vector<ChannelSaliency> out;
  if (criterion == Criterion::Magnitude) {
    for (auto k : spiking) out.push_back(magnitude_scores(effective_weights(model.weights[k]), k));
    return out;
  }
  if (criterion == Criterion::Oracle) {
    for (auto k : spiking) out.push_back(oracle_scores(model, calib, k));
    return out;
  }

  std::vector<FscAccumulator> fsc(spiking.size());
  std::vector<std::vector<double>> sca_sum(spiking.size());
  std::size_t sca_count = 0, batches = 0;
  Model scratch = model;
  for (std::size_t start = 0; start < calib.size(); start += batch_size) {
    const std::size_t end = std::min(calib.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Graph g;
    auto binding = bind_weights(g, scratch);
    ForwardOptions fo;
    fo.record_activity = true;
    auto trace = forward(g, scratch, binding.effective, calib.batch_images(idx), fo);
    const bool need_delta = criterion == Criterion::Fsc;
    if (need_delta) g.backward(ops::softmax_cross_entropy(trace.logits, calib.batch_labels(idx)));
    auto records = collect_activity(g, trace, need_delta);
    for (std::size_t l = 0; l < records.size(); ++l) {
      if (need_delta) {
        fsc[l].add(records[l]);
      } else {
        // Weight by sample count so uneven final batches average correctly.
        auto s = sca_scores(records[l]);
        auto& acc = sca_sum[l];
        acc.resize(s.scores.size(), 0.0);
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += s.scores[c] * static_cast<double>(idx.size());
      }
    }
    sca_count += idx.size();
    ++batches;
  }
  for (std::size_t l = 0; l < spiking.size(); ++l) {
    if (criterion == Criterion::Fsc) {
      out.push_back(fsc[l].scores(spiking[l]));
    } else {
      ChannelSaliency s{spiking[l], sca_sum[l], Criterion::Sca, batches};
      for (auto& v : s.scores) v /= static_cast<double>(sca_count);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<std::size_t> select_victims(const std::vector<double>& scores, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("prune ratio must lie in [0, 1)");
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(scores.size())));
  if (count >= scores.size() && !scores.empty())
    throw ContractError("prune ratio would remove every channel of the layer");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

// Keep only the listed indices along axis `axis` of t.
Tensor keep_along(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& keep_groups, std::size_t group) {
  Shape shape = t.shape();
  const std::size_t outer = shape_numel(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t extent = shape[axis];
  const std::size_t inner = t.size() / (outer * extent);
  shape[axis] = keep_groups.size() * group;
  Tensor out(shape);
  std::size_t dst = 0;
  for (std::size_t o = 0; o < outer; ++o)
    for (auto kg : keep_groups)
      for (std::size_t gi = 0; gi < group; ++gi) {
        const std::size_t src = (o * extent + kg * group + gi) * inner;
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(src), inner,
                    out.data().begin() + static_cast<std::ptrdiff_t>(dst));
        dst += inner;
      }
  return out;
}

std::vector<std::int32_t> keep_assignment(const std::vector<std::int32_t>& a, const Tensor& like, std::size_t axis,
                                          const std::vector<std::size_t>& keep, std::size_t group) {
  Tensor as_real(like.shape());
  for (std::size_t i = 0; i < a.size(); ++i) as_real[i] = a[i];
  const Tensor kept = keep_along(as_real, axis, keep, group);
  std::vector<std::int32_t> out(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) out[i] = static_cast<std::int32_t>(kept[i]);
  return out;
}

void shrink_layer(WeightLayer& layer, std::size_t axis, const std::vector<std::size_t>& keep, std::size_t group) {
  if (auto* cl = std::get_if<ClusterPayload>(&layer.payload))
    cl->assignment = keep_assignment(cl->assignment, layer.latent, axis, keep, group);
  layer.latent = keep_along(layer.latent, axis, keep, group);
  if (auto* cat = std::get_if<CatPayload>(&layer.payload)) {
    const auto table = cat->codebook.quantized() ? cat->codebook.reconstructed_levels() : cat->codebook.levels;
    cat->assignment = assign(layer.latent, table).index;
  }
}

}  // namespace

PruneResult prune_channels(const Model& model, const std::vector<ChannelSaliency>& saliency, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("prune ratio must lie in [0, 1)");
  PruneResult res{model, {}};
  res.report.ratio = ratio;
  res.report.params_before = model.parameter_count();
  if (!saliency.empty()) res.report.criterion = saliency.front().criterion;
  const auto spiking = model.spiking_weight_layers();
  const auto shapes = model.arch.activation_shapes();

  for (const auto& sal : saliency) {
    if (std::find(spiking.begin(), spiking.end(), sal.layer) == spiking.end())
      throw ContractError("layer " + std::to_string(sal.layer) + " is not prunable");
    const std::size_t li = model.weights[sal.layer].layer_index;
    const std::size_t channels = model.arch.layers[li].out;
    if (sal.scores.size() != channels)
      throw StateError("saliency for layer " + std::to_string(sal.layer) + " has " + std::to_string(sal.scores.size()) +
                       " scores, layer has " + std::to_string(channels) + " channels");
    const auto removed = select_victims(sal.scores, ratio);
    LayerPruneRecord rec{sal.layer, channels, {}, removed, sal.scores};
    for (std::size_t c = 0; c < channels; ++c)
      if (!std::binary_search(removed.begin(), removed.end(), c)) rec.kept.push_back(c);
    res.report.layers.push_back(rec);
    if (removed.empty()) continue;

    shrink_layer(res.model.weights[sal.layer], 0, rec.kept, 1);
    res.model.arch.layers[li].out = rec.kept.size();

    // Next weight layer consumes these channels, possibly through a flatten.
    std::size_t group = 1;
    for (std::size_t j = li + 1; j < model.arch.layers.size(); ++j) {
      const auto& l = model.arch.layers[j];
      if (l.kind == LayerKind::Flatten) {
        const Shape& before = shapes[j - 1];
        group = shape_numel(before) / before[0];
      }
      if (l.has_weights()) {
        shrink_layer(res.model.weights[model.weight_slot(j)], 1, rec.kept, group);
        break;
      }
    }
  }
  res.model.arch.validate();
  res.report.params_after = res.model.parameter_count();
  return res;
}

std::vector<Tensor> removal_masks(const Model& model, const PruneReport& report) {
  auto masks = all_ones_masks(model);
  for (const auto& rec : report.layers) {
    const std::size_t lif = lif_ordinal(model, rec.layer);
    for (auto c : rec.removed) masks[lif][c] = 0.0;
  }
  return masks;
}

std::string PruneReport::to_csv() const {
  std::string out = "layer,criterion,channel,score,status\n";
  for (const auto& l : layers)
    for (std::size_t c = 0; c < l.channels_before; ++c) {
      const bool gone = std::binary_search(l.removed.begin(), l.removed.end(), c);
      out += fmt::format("{},{},{},{:.17g},{}\n", l.layer, catsnn::to_string(criterion), c, l.scores[c],
                         gone ? "removed" : "kept");
    }
  return out;
}

std::string PruneReport::to_table() const {
  std::string out = fmt::format("prune criterion={} ratio={:.3f} params {} -> {}\n", catsnn::to_string(criterion), ratio,
                                params_before, params_after);
  out += fmt::format("{:>6} {:>9} {:>8} {:>8}  removed\n", "layer", "channels", "kept", "removed");
  for (const auto& l : layers) {
    std::string ids;
    for (auto c : l.removed) ids += (ids.empty() ? "" : " ") + std::to_string(c);
    out += fmt::format("{:>6} {:>9} {:>8} {:>8}  {}\n", l.layer, l.channels_before, l.kept.size(), l.removed.size(), ids);
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace catsnn
