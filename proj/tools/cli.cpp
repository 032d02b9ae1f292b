#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "catsnn/deploy.hpp"
#include "catsnn/model_io.hpp"
#include "catsnn/pipeline.hpp"

namespace catsnn::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool quiet = false;
};

struct Options {
  std::string model;
  std::string out;
  std::vector<std::string> models;
  std::string method;
  std::string profile;
  std::string profile_file;
  std::string baseline = "none";
  std::optional<std::size_t> m;
  std::optional<int> bits;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> ratio;
  bool csv = false;
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig::defaults() : PipelineConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

std::string out_path(const Globals& g, const std::string& explicit_path, const std::string& fallback) {
  if (!explicit_path.empty()) return explicit_path;
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / fallback).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StateError("cannot write " + path);
  f << text;
}

StageConfig override_stage(StageConfig s, const Options& o) {
  if (o.m) s.m = o.m;
  if (o.bits) s.bits = o.bits;
  if (o.epochs) s.epochs = *o.epochs;
  if (o.lr) s.lr = *o.lr;
  if (o.ratio) s.ratio = o.ratio;
  return s;
}

void check_input_shape(const Model& model, const Dataset& data) {
  if (model.arch.input != data.sample_shape())
    throw ContractError(fmt::format("model expects input {}, dataset provides {}", to_string(model.arch.input),
                                    to_string(data.sample_shape())));
}

HardwareProfile resolve_profile(const PipelineConfig& cfg, const Options& o) {
  std::vector<HardwareProfile> extra;
  const std::string file = o.profile_file.empty() ? cfg.profile_file : o.profile_file;
  if (!file.empty()) extra = load_profiles(file);
  return find_profile(o.profile.empty() ? cfg.profile : o.profile, extra);
}

int cmd_pipeline(const Globals& g, const Options& o, std::ostream& out) {
  PipelineConfig cfg = load_config(g);
  if (o.baseline == "cluster") cfg = clustered_baseline_config(cfg);
  else if (o.baseline == "ternary") cfg = ternary_baseline_config(cfg);
  auto res = run_pipeline(cfg, g.out_dir, g.quiet ? nullptr : &out);
  out << eval_table(res.evals);
  out << "outputs written to " << g.out_dir << '\n';
  return kOk;
}

int run_single_stage(const Globals& g, const Options& o, std::ostream& out, StageKind kind, const std::string& default_out,
                     bool fresh) {
  const PipelineConfig cfg = load_config(g);
  const auto [train, test] = make_dataset(cfg);
  Model model = fresh ? initial_model(cfg, train.sample_shape()) : load_model(o.model);
  check_input_shape(model, train);
  StageConfig stage = override_stage(stage_or_default(cfg, kind), o);
  if (!o.method.empty() && kind == StageKind::FscPrune) stage.criterion = parse_criterion(o.method);
  fs::create_directories(g.out_dir);
  StageContext ctx{cfg, train, test, 0, g.out_dir, g.quiet ? nullptr : &out};
  auto res = run_stage(model, stage, ctx);
  if (kind == StageKind::Cat && o.bits) {
    // --bits on a cat run also snaps the codebooks onto the integer grid
    StageConfig q = stage_or_default(cfg, StageKind::QuantizeCodebook);
    q.bits = o.bits;
    run_stage(model, q, ctx);
  }
  const std::string path = out_path(g, o.out, default_out);
  save_model(model, path);
  auto eval = evaluate(model, test, cfg, stage.name);
  out << eval_table({eval});
  if (!res.log.empty()) write_text((fs::path(g.out_dir) / (stage.name + "_train_log.csv")).string(), train_log_csv(res.log));
  out << "model written to " << path << '\n';
  return kOk;
}

int cmd_eval(const Globals& g, const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(g);
  const auto [train, test] = make_dataset(cfg);
  const Model model = load_model(o.model);
  check_input_shape(model, test);
  const auto e = evaluate(model, test, cfg, fs::path(o.model).stem().string());
  if (o.csv) out << eval_csv({e});
  else out << eval_table({e});
  return kOk;
}

int cmd_deploy_check(const Globals& g, const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(g);
  const Model model = load_model(o.model);
  const auto report = validate_profile(model, resolve_profile(cfg, o));
  if (o.csv) out << report.to_csv();
  else out << report.to_table();
  return report.passed() ? kOk : kValidationFailed;
}

int cmd_export_lut(const Globals& g, const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(g);
  const Model model = load_model(o.model);
  const HardwareProfile profile = resolve_profile(cfg, o);
  const auto report = validate_profile(model, profile);
  if (!report.passed()) {
    out << report.to_table();
    throw ValidationError("export refused: model fails profile '" + profile.name + "'");
  }
  const std::string path = out_path(g, o.out, "model.lut");
  export_lut(model, profile, path);
  out << "LUT written to " << path << " (manifest " << path << ".json)\n";
  return kOk;
}

int cmd_report_dr(const Globals& g, const Options& o, std::ostream& out) {
  const PipelineConfig cfg = load_config(g);
  const auto [train, test] = make_dataset(cfg);
  std::string csv = "model,payload,perf_acc,perf_f1,latency_s_proxy,energy_mj,size_mb,dr_acc,dr_f1\n";
  for (const auto& path : o.models) {
    const Model model = load_model(path);
    check_input_shape(model, test);
    const auto e = evaluate(model, test, cfg, path);
    const auto d = deploy_row(model, e, test, cfg).metrics;
    csv += fmt::format("{},{},{},{},{:.3g},{},{},{:.6g},{:.6g}\n", path, e.payload, d.perf_acc, d.perf_f1, d.latency_s,
                       d.energy_mj, d.size_mb, d.dr_acc, d.dr_f1);
  }
  out << csv;
  if (!o.out.empty()) write_text(o.out, csv);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"catsnn: spiking network compression toolkit (codebook training, channel pruning, deployment checks)",
               "catsnn"};
  app.require_subcommand(1);
  Globals g;
  Options o;
  app.add_option("--config", g.config, "Pipeline configuration (INI)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override [run] seed");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs");
  app.add_flag("-q,--quiet", g.quiet, "Suppress per-epoch progress");

  auto* pipeline = app.add_subcommand("pipeline", "Run every configured stage and write all reports");
  pipeline->add_option("--baseline", o.baseline, "Replace the schedule with a baseline")
      ->check(CLI::IsMember({"none", "cluster", "ternary"}));

  auto* train = app.add_subcommand("train", "Train a fresh float SNN (fp32-train stage)");
  train->add_option("--out", o.out, "Output model file");
  train->add_option("--epochs", o.epochs);
  train->add_option("--lr", o.lr);

  auto* compress = app.add_subcommand("compress", "Constrain a float model: cat | cluster | ternary");
  compress->add_option("method", o.method)->required()->check(CLI::IsMember({"cat", "cluster", "ternary"}));
  compress->add_option("--model", o.model, "Input model file")->required()->check(CLI::ExistingFile);
  compress->add_option("--out", o.out, "Output model file");
  compress->add_option("--m", o.m, "Levels per layer (cat, cluster)");
  compress->add_option("--bits", o.bits, "Centroid bit-width (cluster); for cat, quantize the codebooks at this width");
  compress->add_option("--epochs", o.epochs);
  compress->add_option("--lr", o.lr);

  auto* prune = app.add_subcommand("prune", "Structured channel pruning: fsc | sca | mag | oracle");
  prune->add_option("criterion", o.method)->required()->check(CLI::IsMember({"fsc", "sca", "mag", "oracle"}));
  prune->add_option("--model", o.model, "Input model file")->required()->check(CLI::ExistingFile);
  prune->add_option("--out", o.out, "Output model file");
  prune->add_option("--ratio", o.ratio, "Fraction of channels removed per layer");

  auto* eval = app.add_subcommand("eval", "Accuracy, macro-F1, energy and size of a model");
  eval->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  eval->add_flag("--csv", o.csv, "CSV instead of a table");

  auto* check = app.add_subcommand("deploy-check", "Validate a model against a hardware profile (exit 1 on failure)");
  check->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  check->add_option("--profile", o.profile, "Profile name")->required();
  check->add_option("--profile-file", o.profile_file, "Extra profile catalog (INI)")->check(CLI::ExistingFile);
  check->add_flag("--csv", o.csv, "CSV instead of a table");

  auto* lut = app.add_subcommand("export-lut", "Write the integer LUT and its JSON manifest");
  lut->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  lut->add_option("--profile", o.profile, "Profile name (default from config)");
  lut->add_option("--profile-file", o.profile_file, "Extra profile catalog (INI)")->check(CLI::ExistingFile);
  lut->add_option("--out", o.out, "Output LUT path");

  auto* dr = app.add_subcommand("report-dr", "DeployRatio CSV, one row per model");
  dr->add_option("--model", o.models, "Model files")->required()->check(CLI::ExistingFile);
  dr->add_option("--out", o.out, "Also write the CSV here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    err << '\n' << app.help();
    return kUsageError;
  }

  try {
    if (pipeline->parsed()) return cmd_pipeline(g, o, out);
    if (train->parsed()) return run_single_stage(g, o, out, StageKind::Fp32Train, "fp32.csnn", true);
    if (compress->parsed()) {
      const StageKind kind = o.method == "cat" ? StageKind::Cat
                             : o.method == "cluster" ? StageKind::Cluster
                                                     : StageKind::Ternary;
      return run_single_stage(g, o, out, kind, o.method + ".csnn", false);
    }
    if (prune->parsed()) return run_single_stage(g, o, out, StageKind::FscPrune, "pruned.csnn", false);
    if (eval->parsed()) return cmd_eval(g, o, out);
    if (check->parsed()) return cmd_deploy_check(g, o, out);
    if (lut->parsed()) return cmd_export_lut(g, o, out);
    if (dr->parsed()) return cmd_report_dr(g, o, out);
  } catch (const ValidationError& e) {
    err << "validation failed: " << e.what() << '\n';
    return kValidationFailed;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << '\n';
    return kValidationFailed;
  }
  err << app.help();
  return kUsageError;
}

}  // namespace catsnn::cli
