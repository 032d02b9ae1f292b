#include "catsnn/network.hpp"

#include <algorithm>

#include "catsnn/baselines.hpp"
#include "catsnn/ops.hpp"

namespace catsnn {

namespace {

WeightBinding bind_impl(Graph& g, const Model& model, Model* writable, const BindOptions& opts) {
  WeightBinding b;
  const bool train = opts.trainable && g.grad_enabled();
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    const auto& layer = model.weights[k];
    const Shape& shape = layer.latent.shape();
    auto add_param = [&](ParamSlot::Role role, Tensor value, bool decay) {
      Var leaf = g.leaf(std::move(value), train);
      if (train) b.params.push_back(ParamSlot{k, role, leaf, decay});
      return leaf;
    };

    Var eff = std::visit(
        [&](const auto& p) -> Var {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, FloatPayload>) {
            return add_param(ParamSlot::Role::Latent, layer.latent, true);
          } else if constexpr (std::is_same_v<P, QatPayload>) {
            return uniform_fake_quant(add_param(ParamSlot::Role::Latent, layer.latent, true), p.bits);
          } else if constexpr (std::is_same_v<P, CatPayload>) {
            Var latent = add_param(ParamSlot::Role::Latent, layer.latent, true);
            if (p.codebook.quantized()) {
              Var wq = g.leaf(reconstruct_quantized(layer.latent, p.codebook));
              return effective_weight(latent, wq, false);
            }
            Var levels = add_param(ParamSlot::Role::Levels, Tensor(Shape{p.codebook.m()}, p.codebook.levels), false);
            auto a = assign(layer.latent, p.codebook.levels);
            Var wq = ops::gather(levels, a.index, shape);
            Var out = effective_weight(latent, wq, opts.codebook_task_grad);
            if (train) {
              Var c = commitment_loss(levels, a.index, layer.latent);
              b.commitment = b.commitment ? ops::add(*b.commitment, c) : c;
            }
            if (writable) std::get<CatPayload>(writable->weights[k].payload).assignment = std::move(a.index);
            return out;
          } else if constexpr (std::is_same_v<P, ClusterPayload>) {
            Var c = add_param(ParamSlot::Role::Centroids, Tensor(Shape{p.centroids.size()}, p.centroids), false);
            return ops::gather(c, p.assignment, shape);
          } else {
            Var latent = add_param(ParamSlot::Role::Latent, layer.latent, true);
            Var wp = add_param(ParamSlot::Role::PosScale, Tensor::scalar(p.w_pos), false);
            Var wn = add_param(ParamSlot::Role::NegScale, Tensor::scalar(p.w_neg), false);
            return ternary_forward(latent, wp, wn, p.threshold_frac);
          }
        },
        layer.payload);
    b.effective.push_back(eff);
  }
  return b;
}

}  // namespace

WeightBinding bind_weights(Graph& g, Model& model, const BindOptions& opts) { return bind_impl(g, model, &model, opts); }

WeightBinding bind_weights_const(Graph& g, const Model& model) {
  BindOptions opts;
  opts.trainable = false;
  return bind_impl(g, model, nullptr, opts);
}

void write_param(Model& model, const ParamSlot& slot, const Tensor& value) {
  auto& layer = model.weights.at(slot.weight_slot);
  switch (slot.role) {
    case ParamSlot::Role::Latent: layer.latent = value; break;
    case ParamSlot::Role::Levels: std::get<CatPayload>(layer.payload).codebook.levels = value.values(); break;
    case ParamSlot::Role::Centroids: std::get<ClusterPayload>(layer.payload).centroids = value.values(); break;
    case ParamSlot::Role::PosScale: std::get<TernaryPayload>(layer.payload).w_pos = value[0]; break;
    case ParamSlot::Role::NegScale: std::get<TernaryPayload>(layer.payload).w_neg = value[0]; break;
  }
}

Tensor read_param(const Model& model, const ParamSlot& slot) {
  const auto& layer = model.weights.at(slot.weight_slot);
  switch (slot.role) {
    case ParamSlot::Role::Latent: return layer.latent;
    case ParamSlot::Role::Levels: {
      const auto& lv = std::get<CatPayload>(layer.payload).codebook.levels;
      return Tensor(Shape{lv.size()}, lv);
    }
    case ParamSlot::Role::Centroids: {
      const auto& c = std::get<ClusterPayload>(layer.payload).centroids;
      return Tensor(Shape{c.size()}, c);
    }
    case ParamSlot::Role::PosScale: return Tensor::scalar(std::get<TernaryPayload>(layer.payload).w_pos);
    case ParamSlot::Role::NegScale: return Tensor::scalar(std::get<TernaryPayload>(layer.payload).w_neg);
  }
  throw StateError("unknown parameter role");
}

std::size_t model_steps(const Model& model) {
  return model.activation == Activation::Relu ? 1 : model.lif.t_steps;
}

ForwardTrace unroll_network(Graph& g, const Model& model, const std::vector<Var>& weights, const Tensor& x_seq,
                            const ForwardOptions& opts) {
  if (model.arch.layers.empty() || model.weights.empty()) throw ContractError("unroll_network: empty network");
  if (x_seq.rank() < 3 || x_seq.dim(1) == 0) throw ContractError("unroll_network: zero timesteps");
  if (weights.size() != model.weights.size())
    throw ContractError("unroll_network: " + std::to_string(weights.size()) + " bound weights for " +
                        std::to_string(model.weights.size()) + " layers");
  const std::size_t steps = x_seq.dim(1);
  const std::size_t n_lif = model.num_lif_layers();
  if (opts.channel_masks && opts.channel_masks->size() != n_lif)
    throw DimensionError("unroll_network: channel mask count does not match LIF layers");
  if (opts.gates && opts.gates->size() != n_lif)
    throw DimensionError("unroll_network: gate count does not match LIF layers");

  const SpikeMode mode = model.activation == Activation::LifSmooth ? SpikeMode::Smooth : SpikeMode::Hard;
  ForwardTrace trace;
  trace.spikes.resize(n_lif);
  trace.outputs.resize(n_lif);
  std::vector<std::optional<LifState>> states(n_lif);
  std::vector<Var> mask_vars(n_lif);
  if (opts.channel_masks)
    for (std::size_t i = 0; i < n_lif; ++i) mask_vars[i] = g.leaf((*opts.channel_masks)[i]);

  std::optional<Var> logits;
  for (std::size_t t = 0; t < steps; ++t) {
    Var x = g.leaf(time_slice(x_seq, t));
    std::size_t wk = 0, lif = 0;
    for (const auto& layer : model.arch.layers) {
      switch (layer.kind) {
        case LayerKind::Conv: x = ops::conv2d(x, weights[wk++], layer.stride, layer.pad); break;
        case LayerKind::Dense: x = ops::linear(x, weights[wk++]); break;
        case LayerKind::AvgPool: x = ops::avg_pool2d(x, layer.kernel); break;
        case LayerKind::Flatten: x = ops::flatten(x); break;
        case LayerKind::Lif: {
          Var s;
          if (model.activation == Activation::Relu) {
            s = ops::relu(x);
          } else {
            if (!states[lif]) states[lif] = zero_lif_state(g, x.shape());
            auto step = lif_step(x, *states[lif], model.lif, mode);
            states[lif] = step.state;
            s = step.spikes;
          }
          Var out = s;
          if (opts.gates) out = ops::channel_scale(out, (*opts.gates)[lif]);
          if (opts.channel_masks) out = ops::channel_scale(out, mask_vars[lif]);
          if (opts.record_activity && !opts.gates && !opts.channel_masks) out = ops::scale(out, 1.0);
          if (opts.record_activity) {
            trace.spikes[lif].push_back(s);
            trace.outputs[lif].push_back(out);
          }
          x = out;
          ++lif;
          break;
        }
      }
    }
    logits = logits ? ops::add(*logits, x) : x;
  }
  trace.logits = model.readout == Readout::Mean ? ops::scale(*logits, 1.0 / static_cast<double>(steps)) : *logits;
  return trace;
}

ForwardTrace forward(Graph& g, const Model& model, const std::vector<Var>& weights, const Tensor& x,
                     const ForwardOptions& opts) {
  return unroll_network(g, model, weights, encode_replicate(x, model_steps(model)), opts);
}

Tensor predict_logits(const Model& model, const Tensor& x, const std::vector<Tensor>* channel_masks) {
  Graph g;
  g.set_grad_enabled(false);
  auto b = bind_weights_const(g, model);
  ForwardOptions opts;
  opts.channel_masks = channel_masks;
  return forward(g, model, b.effective, x, opts).logits.value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.data().subspan(i * k, k);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<ActivityRecord> collect_activity(const Graph& g, const ForwardTrace& trace, bool with_delta) {
  std::vector<ActivityRecord> out;
  for (std::size_t l = 0; l < trace.spikes.size(); ++l) {
    const auto& steps = trace.spikes[l];
    if (steps.empty()) throw StateError("collect_activity: forward pass did not record activity");
    const Shape& per = steps[0].shape();  // N x rest
    const std::size_t n = per[0], T = steps.size();
    const std::size_t inner = steps[0].size() / n;
    Shape shape{n, T};
    shape.insert(shape.end(), per.begin() + 1, per.end());
    ActivityRecord rec{Tensor(shape), std::nullopt};
    if (with_delta) rec.delta = Tensor(shape);
    for (std::size_t t = 0; t < T; ++t) {
      const Tensor& y = steps[t].value();
      const Tensor* d = with_delta ? g.grad(trace.outputs[l][t]) : nullptr;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t dst = (b * T + t) * inner + i;
          rec.y[dst] = y[b * inner + i];
          if (with_delta) (*rec.delta)[dst] = d ? (*d)[b * inner + i] : 0.0;
        }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace catsnn
