#include "catsnn/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "catsnn/network.hpp"
#include "catsnn/ops.hpp"
#include "catsnn/optim.hpp"

namespace catsnn {

namespace {

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

std::size_t max_constrained_unique(const Model& model) {
  std::size_t out = 0;
  for (const auto& w : model.weights)
    if (!std::holds_alternative<FloatPayload>(w.payload)) out = std::max(out, unique_weight_count(w));
  return out;
}

std::vector<EpochLog> train_model(Model& model, const Dataset& train, const Dataset* test, const TrainOptions& opts,
                                  const std::string& stage, const StepHook& hook) {
  std::vector<EpochLog> logs;
  if (opts.epochs == 0) return logs;
  if (opts.batch_size == 0) throw ContractError("batch size must be positive");
  AdamW optim(opts.weight_decay);
  std::vector<std::size_t> order = iota_n(train.size());
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, opts.epochs, opts.lr);
    std::mt19937_64 rng(opts.seed * 1000003ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    // Per CAT layer, how many weights each level attracted this epoch.
    std::vector<std::vector<std::size_t>> usage(model.weights.size());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = train.batch_images(idx);
      const auto y = train.batch_labels(idx);

      Graph g;
      BindOptions bo;
      bo.codebook_task_grad = opts.codebook_task_grad;
      auto binding = bind_weights(g, model, bo);
      auto trace = forward(g, model, binding.effective, x);
      Var loss = ops::softmax_cross_entropy(trace.logits, y);
      loss_sum += loss.value()[0] * static_cast<double>(idx.size());
      const auto pred = argmax_rows(trace.logits.value());
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
      if (binding.commitment) loss = total_loss(loss, *binding.commitment, opts.beta_commit);
      g.backward(loss);

      for (std::size_t k = 0; k < model.weights.size(); ++k)
        if (auto* cat = std::get_if<CatPayload>(&model.weights[k].payload)) {
          auto& u = usage[k];
          u.resize(cat->codebook.m(), 0);
          for (auto a : cat->assignment) ++u[static_cast<std::size_t>(a)];
        }

      std::vector<Tensor> values;
      std::vector<Tensor> grads;
      values.reserve(binding.params.size());
      grads.reserve(binding.params.size());
      for (const auto& p : binding.params) {
        values.push_back(read_param(model, p));
        grads.push_back(g.grad_or_zeros(p.leaf));
      }
      std::vector<ParamUpdate> updates;
      for (std::size_t k = 0; k < values.size(); ++k)
        updates.push_back(ParamUpdate{&values[k], &grads[k], binding.params[k].decay});
      optim.step(updates, lr);
      for (std::size_t k = 0; k < values.size(); ++k) write_param(model, binding.params[k], values[k]);
      ++step;
      if (hook) hook(model, step);
    }

    if (opts.reseed_dead_levels)
      for (std::size_t k = 0; k < model.weights.size(); ++k)
        if (auto* cat = std::get_if<CatPayload>(&model.weights[k].payload); cat && !cat->codebook.quantized())
          reseed_dead_levels(cat->codebook, model.weights[k].latent, usage[k]);

    EpochLog log;
    log.stage = stage;
    log.epoch = epoch + 1;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(train.size());
    log.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    log.test_acc = test ? accuracy(model, *test) : 0.0;
    log.max_unique = max_constrained_unique(model);
    logs.push_back(log);
  }
  return logs;
}

std::vector<int> predict(const Model& model, const Dataset& data, std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(data.size());
  const auto all = iota_n(data.size());
  for (std::size_t start = 0; start < all.size(); start += batch_size) {
    const std::size_t end = std::min(all.size(), start + batch_size);
    std::span<const std::size_t> idx(all.data() + start, end - start);
    const auto p = argmax_rows(predict_logits(model, data.batch_images(idx)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double accuracy(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  const auto p = predict(model, data, batch_size);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == data.labels[i];
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

double dataset_loss(const Model& model, const Dataset& data, const std::vector<Tensor>* channel_masks,
                    std::size_t batch_size) {
  const auto all = iota_n(data.size());
  double total = 0.0;
  for (std::size_t start = 0; start < all.size(); start += batch_size) {
    const std::size_t end = std::min(all.size(), start + batch_size);
    std::span<const std::size_t> idx(all.data() + start, end - start);
    Graph g;
    g.set_grad_enabled(false);
    auto b = bind_weights_const(g, model);
    ForwardOptions fo;
    fo.channel_masks = channel_masks;
    auto trace = forward(g, model, b.effective, data.batch_images(idx), fo);
    Var loss = ops::softmax_cross_entropy(trace.logits, data.batch_labels(idx));
    total += loss.value()[0] * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace catsnn
