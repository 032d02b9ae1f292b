#include "catsnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "catsnn/baselines.hpp"
#include "catsnn/model_io.hpp"

namespace catsnn {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StateError("cannot write " + path);
  out << text;
}

void say(const StageContext& ctx, const std::string& line) {
  if (ctx.progress) *ctx.progress << line << '\n' << std::flush;
}

[[noreturn]] void incompatible(const StageConfig& stage, const Model& model, std::size_t k) {
  throw ContractError(fmt::format("stage '{}' ({}) cannot act on weight layer {} with payload '{}'", stage.name,
                                  to_string(stage.kind), k, payload_name(model.weights[k].payload)));
}

void require_unconstrained(const StageConfig& stage, const Model& model) {
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    const auto& p = model.weights[k].payload;
    if (!std::holds_alternative<FloatPayload>(p) && !std::holds_alternative<QatPayload>(p)) incompatible(stage, model, k);
  }
}

TrainOptions train_options(const StageConfig& stage, const StageContext& ctx) {
  TrainOptions o;
  o.epochs = stage.epochs;
  o.lr = stage.lr;
  o.weight_decay = stage.weight_decay;
  o.batch_size = ctx.cfg.batch_size;
  o.beta_commit = ctx.cfg.beta_commit;
  o.codebook_task_grad = ctx.cfg.codebook_task_grad;
  o.reseed_dead_levels = ctx.cfg.reseed_dead_levels;
  o.seed = ctx.cfg.seed * 7919ULL + ctx.index + 1;
  return o;
}

std::vector<EpochLog> train(Model& model, const StageConfig& stage, const StageContext& ctx, std::size_t epochs) {
  TrainOptions o = train_options(stage, ctx);
  o.epochs = epochs;
  auto log = train_model(model, ctx.train, &ctx.test, o, stage.name, ctx.step_hook);
  for (const auto& l : log)
    say(ctx, fmt::format("[{}] epoch {:>3} lr {:.2e} loss {:.4f} train {:.3f} test {:.3f} unique {}", l.stage, l.epoch,
                         l.lr, l.train_loss, l.train_acc, l.test_acc, l.max_unique));
  return log;
}

void check_unique_bound(const std::vector<EpochLog>& log, std::size_t bound, const StageConfig& stage) {
  for (const auto& l : log)
    if (l.max_unique > bound)
      throw StateError(fmt::format("stage '{}': {} distinct weight values after epoch {}, bound is {}", stage.name,
                                   l.max_unique, l.epoch, bound));
}

HardwareProfile resolve_profile(const PipelineConfig& cfg) {
  std::vector<HardwareProfile> extra;
  if (!cfg.profile_file.empty()) extra = load_profiles(cfg.profile_file);
  return find_profile(cfg.profile, extra);
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::pair<Dataset, Dataset> make_dataset(const PipelineConfig& cfg) {
  if (cfg.data.kind == "idx")
    return {load_idx_dataset(cfg.data.train_images, cfg.data.train_labels),
            load_idx_dataset(cfg.data.test_images, cfg.data.test_labels)};
  return make_synthetic(cfg.data.synthetic, cfg.seed);
}

Model initial_model(const PipelineConfig& cfg, const Shape& input) {
  Model m = init_model(cfg.architecture(input), cfg.lif, cfg.seed, cfg.init_gain);
  m.readout = cfg.readout;
  m.config_hash = cfg.hash();
  return m;
}

StageConfig stage_or_default(const PipelineConfig& cfg, StageKind kind) {
  for (const auto& s : cfg.stages)
    if (s.kind == kind) return s;
  StageConfig s;
  s.name = to_string(kind);
  s.kind = kind;
  switch (kind) {
    case StageKind::Fp32Train: s.epochs = 30; s.lr = 1e-2; break;
    case StageKind::Cat:
    case StageKind::Finetune: s.epochs = 15; s.lr = 1e-4; break;
    case StageKind::Qat:
    case StageKind::Cluster:
    case StageKind::Ternary: s.epochs = 15; s.lr = 1e-3; break;
    default: s.epochs = 0; break;
  }
  return s;
}

StageResult run_stage(Model& model, const StageConfig& stage, const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (stage.activation) model.activation = *stage.activation;
  StageResult res;
  const std::uint64_t stage_seed = cfg.seed * 7919ULL + ctx.index + 1;

  switch (stage.kind) {
    case StageKind::Fp32Train:
      for (std::size_t k = 0; k < model.weights.size(); ++k)
        if (!std::holds_alternative<FloatPayload>(model.weights[k].payload)) incompatible(stage, model, k);
      res.log = train(model, stage, ctx, stage.epochs);
      break;

    case StageKind::Qat: {
      require_unconstrained(stage, model);
      const int bits = stage.bits.value_or(cfg.qat_bits);
      for (auto& w : model.weights) w.payload = QatPayload{bits};
      res.log = train(model, stage, ctx, stage.epochs);
      break;
    }

    case StageKind::Cluster: {
      require_unconstrained(stage, model);
      const std::size_t m = stage.m.value_or(cfg.cluster_m);
      const int bits = stage.bits.value_or(cfg.cluster_bits);
      for (std::size_t k = 0; k < model.weights.size(); ++k) {
        auto& w = model.weights[k];
        const Tensor eff = effective_weights(w);
        const std::size_t distinct = count_unique(eff.data());
        KMeansOptions ko;
        ko.seed = stage_seed + k;
        auto km = kmeans_1d(eff.data(), std::min(m, distinct), ko);
        w.payload = ClusterPayload{km.centroids, km.assignment, bits};
      }
      const auto ft = static_cast<std::size_t>(std::ceil(cfg.cluster_finetune_frac * static_cast<double>(stage.epochs)));
      res.log = train(model, stage, ctx, ft);
      // Integer centroids for deployment.
      for (auto& w : model.weights) {
        auto& p = std::get<ClusterPayload>(w.payload);
        p.centroids = uniform_fake_quant(Tensor(Shape{p.centroids.size()}, p.centroids), bits).values();
      }
      check_unique_bound(res.log, m, stage);
      break;
    }

    case StageKind::Cat: {
      require_unconstrained(stage, model);
      const std::size_t m = stage.m.value_or(cfg.cat_m);
      for (std::size_t k = 0; k < model.weights.size(); ++k) {
        auto& w = model.weights[k];
        KMeansOptions ko;
        ko.seed = stage_seed + k;
        auto km = kmeans_1d(w.latent.data(), m, ko);
        CatPayload p;
        p.codebook.levels = km.centroids;
        p.assignment = assign(w.latent, p.codebook.levels).index;
        w.payload = std::move(p);
      }
      res.log = train(model, stage, ctx, stage.epochs);
      check_unique_bound(res.log, m, stage);
      break;
    }

    case StageKind::FscPrune: {
      if (model.activation == Activation::Relu)
        throw ContractError("stage '" + stage.name + "' (fsc-prune) needs a spiking model, got activation 'relu'");
      const Criterion crit = stage.criterion.value_or(cfg.prune_criterion);
      const double ratio = stage.ratio.value_or(cfg.prune_ratio);
      const Dataset calib = calibration_set(ctx.train, cfg.calib_batches, cfg.batch_size, stage_seed);
      const auto saliency = compute_saliency(model, calib, crit, cfg.batch_size);
      auto pr = prune_channels(model, saliency, ratio);
      model = std::move(pr.model);
      say(ctx, pr.report.to_table());
      if (!ctx.out_dir.empty()) write_text((fs::path(ctx.out_dir) / "prune_report.csv").string(), pr.report.to_csv());
      res.prune = std::move(pr.report);
      break;
    }

    case StageKind::Ternary: {
      require_unconstrained(stage, model);
      for (auto& w : model.weights) {
        const TernaryLayer t = init_ternary(w.latent, cfg.ternary_threshold);
        w.payload = TernaryPayload{t.w_pos, t.w_neg, t.threshold_frac};
      }
      res.log = train(model, stage, ctx, stage.epochs);
      check_unique_bound(res.log, 3, stage);
      break;
    }

    case StageKind::Finetune:
      res.log = train(model, stage, ctx, stage.epochs);
      for (std::size_t k = 0; k < model.weights.size(); ++k)
        if (const auto* c = std::get_if<CatPayload>(&model.weights[k].payload)) check_unique_bound(res.log, c->codebook.m(), stage);
      break;

    case StageKind::QuantizeCodebook: {
      const int bits = stage.bits.value_or(cfg.cat_bits);
      for (std::size_t k = 0; k < model.weights.size(); ++k) {
        auto* c = std::get_if<CatPayload>(&model.weights[k].payload);
        if (!c || c->codebook.quantized()) incompatible(stage, model, k);
        c->codebook = quantize_codebook(c->codebook, bits, cfg.quant_mode);
        c->assignment = assign(model.weights[k].latent, c->codebook.reconstructed_levels()).index;
      }
      break;
    }

    case StageKind::Export: {
      const HardwareProfile profile = resolve_profile(cfg);
      ProfileReport report = validate_profile(model, profile);
      say(ctx, report.to_table());
      if (!ctx.out_dir.empty()) write_text((fs::path(ctx.out_dir) / "profile_report.csv").string(), report.to_csv());
      if (!report.passed()) throw ValidationError("stage '" + stage.name + "': model fails profile '" + profile.name + "'");
      if (!ctx.out_dir.empty()) export_lut(model, profile, (fs::path(ctx.out_dir) / "model.lut").string());
      res.profile = std::move(report);
      break;
    }
  }
  model.provenance.push_back(fmt::format("stage={} kind={} epochs={} lr={}", stage.name, to_string(stage.kind),
                                         stage.epochs, stage.lr));
  return res;
}

EvalSummary evaluate(const Model& model, const Dataset& test, const PipelineConfig& cfg, const std::string& label) {
  if (test.size() == 0) throw ContractError("evaluate: empty test set");
  EvalSummary e;
  e.stage = label;
  e.payload = model.weights.empty() ? "none" : payload_name(model.weights.front().payload);
  e.repeats = cfg.eval_repeats;
  std::vector<double> acc, f1, prec, rec;
  std::vector<std::size_t> order(test.size());
  for (std::size_t r = 0; r < cfg.eval_repeats; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed * 104729ULL + r);
    std::shuffle(order.begin(), order.end(), rng);
    const Dataset view = test.subset(order);
    const auto m = classification_metrics(predict(model, view), view.labels, test.classes);
    acc.push_back(m.accuracy);
    f1.push_back(m.macro_f1);
    prec.push_back(m.macro_precision);
    rec.push_back(m.macro_recall);
  }
  e.acc_mean = mean_of(acc);
  e.acc_std = std_of(acc);
  e.f1_mean = mean_of(f1);
  e.f1_std = std_of(f1);
  e.precision_mean = mean_of(prec);
  e.recall_mean = mean_of(rec);

  EnergyModel em = cfg.energy;
  em.timesteps = model.lif.t_steps;
  if (model.activation != Activation::Relu) {
    std::vector<std::size_t> first(std::min<std::size_t>(256, test.size()));
    std::iota(first.begin(), first.end(), std::size_t{0});
    e.spike_rates = measure_spike_rates(model, test.batch_images(first));
    e.energy_mj = energy_mj(model, em, &e.spike_rates);
  } else {
    e.energy_mj = energy_mj(model, em);
  }
  e.size_mb = model_size_mb(model, cfg.size_mode);
  e.params = model.parameter_count();
  e.max_unique = 0;
  for (const auto& w : model.weights) e.max_unique = std::max(e.max_unique, unique_weight_count(w));
  return e;
}

DeployRow deploy_row(const Model& model, const EvalSummary& eval, const Dataset& test, const PipelineConfig& cfg) {
  const double l = latency_s(model, test, cfg.latency_batches, cfg.batch_size);
  return {eval.stage, make_deploy_metrics(eval.acc_mean, eval.f1_mean, l, eval.energy_mj, eval.size_mb)};
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir, std::ostream* progress,
                            bool measure_latency) {
  cfg.validate();
  const auto [train, test] = make_dataset(cfg);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "config.ini").string(), cfg.to_ini());
  }
  PipelineResult res{initial_model(cfg, train.sample_shape()), {}, {}, {}, {}, {}};
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& stage = cfg.stages[i];
    StageContext ctx{cfg, train, test, i, out_dir, progress};
    if (progress) *progress << fmt::format("== stage {} ({})", stage.name, to_string(stage.kind)) << '\n';
    auto sr = run_stage(res.model, stage, ctx);
    res.log.insert(res.log.end(), sr.log.begin(), sr.log.end());
    if (sr.prune) res.prune = std::move(sr.prune);
    if (sr.profile) res.profile = std::move(sr.profile);
    res.evals.push_back(evaluate(res.model, test, cfg, stage.name));
    if (measure_latency) res.deploy.push_back(deploy_row(res.model, res.evals.back(), test, cfg));
    if (progress) *progress << eval_table({res.evals.back()});
    if (!out_dir.empty()) save_model(res.model, (fs::path(out_dir) / fmt::format("{:02}_{}.csnn", i + 1, stage.name)).string());
  }
  if (!out_dir.empty()) {
    save_model(res.model, (fs::path(out_dir) / "model.csnn").string());
    write_text((fs::path(out_dir) / "train_log.csv").string(), train_log_csv(res.log));
    write_text((fs::path(out_dir) / "eval.csv").string(), eval_csv(res.evals));
    if (measure_latency) write_text((fs::path(out_dir) / "deploy_report.csv").string(), deploy_csv(res.deploy));
  }
  return res;
}

PipelineConfig clustered_baseline_config(const PipelineConfig& base) {
  PipelineConfig c = base;
  const StageConfig fp = stage_or_default(base, StageKind::Fp32Train);
  StageConfig ft = stage_or_default(base, StageKind::Qat);
  StageConfig ann = fp;
  ann.name = "ann";
  ann.activation = Activation::Relu;
  StageConfig qat = ft;
  qat.name = "qat";
  qat.kind = StageKind::Qat;
  qat.m.reset();
  StageConfig cl = ft;
  cl.name = "cluster";
  cl.kind = StageKind::Cluster;
  cl.m.reset();
  StageConfig snn;
  snn.name = "to-snn";
  snn.kind = StageKind::Finetune;
  snn.epochs = 0;
  snn.activation = Activation::Lif;
  c.stages = {ann, qat, cl, snn};
  return c;
}

PipelineConfig ternary_baseline_config(const PipelineConfig& base) {
  PipelineConfig c = base;
  StageConfig fp = stage_or_default(base, StageKind::Fp32Train);
  StageConfig t = stage_or_default(base, StageKind::Ternary);
  c.stages = {fp, t};
  return c;
}

std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "stage,epoch,lr,train_loss,train_acc,test_acc,max_unique\n";
  for (const auto& l : log)
    out += fmt::format("{},{},{},{},{},{},{}\n", l.stage, l.epoch, l.lr, l.train_loss, l.train_acc, l.test_acc, l.max_unique);
  return out;
}

std::string eval_csv(const std::vector<EvalSummary>& evals) {
  std::string out =
      "stage,payload,repeats,acc_mean,acc_std,f1_mean,f1_std,precision,recall,energy_mj,size_mb,params,max_unique\n";
  for (const auto& e : evals) {
    const std::string acc_std = e.repeats > 1 ? fmt::format("{}", e.acc_std) : "";
    const std::string f1_std = e.repeats > 1 ? fmt::format("{}", e.f1_std) : "";
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", e.stage, e.payload, e.repeats, e.acc_mean, acc_std,
                       e.f1_mean, f1_std, e.precision_mean, e.recall_mean, e.energy_mj, e.size_mb, e.params, e.max_unique);
  }
  return out;
}

std::string deploy_csv(const std::vector<DeployRow>& rows) {
  std::string out = "stage,perf_acc,perf_f1,latency_s_proxy,energy_mj,size_mb,dr_acc,dr_f1\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out += fmt::format("{},{},{},{:.3g},{},{},{:.6g},{:.6g}\n", r.stage, m.perf_acc, m.perf_f1, m.latency_s, m.energy_mj,
                       m.size_mb, m.dr_acc, m.dr_f1);
  }
  return out;
}

std::string eval_table(const std::vector<EvalSummary>& evals) {
  std::string out = fmt::format("{:<12} {:<8} {:>16} {:>16} {:>11} {:>10} {:>8} {:>7}\n", "stage", "payload", "acc", "macro-f1",
                                "energy_mJ", "size_MB", "params", "unique");
  for (const auto& e : evals)
    out += fmt::format("{:<12} {:<8} {:>8.4f}±{:<7.4f} {:>8.4f}±{:<7.4f} {:>11.3e} {:>10.5f} {:>8} {:>7}\n", e.stage,
                       e.payload, e.acc_mean, e.acc_std, e.f1_mean, e.f1_std, e.energy_mj, e.size_mb, e.params,
                       e.max_unique);
  return out;
}

}  // namespace catsnn
