// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Kept in a header so tests can drive run_cli().

#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdcfm/cdcfm.hpp"

namespace cdcfm::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size() && item.find_first_not_of(" \t", used) != std::string::npos) throw 0;
    } catch (...) {
      throw ConfigError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Options {
  // synth
  std::string synth_out = "data";
  int num_classes = 8;
  int per_class = 64;
  int size = 32;
  int channels = 1;
  int stages = 3;
  std::uint64_t seed = 0;
  // train / sweep
  std::string config_path;
  // sample / analyze
  std::string checkpoint;
  int count = 16;
  double cfg_scale = 3.0;
  std::optional<int> label;
  bool save_intermediates = false;
  bool pgm = false;
  std::string out_dir;
  std::string data_dir;
  int n = 1000;
  int eval_samples = 64;
  int trials = 5;
  // sweep
  std::string gammas = "1,2,4";
  std::string held_out_dir;
  bool reuse = false;
};

inline int cmd_synth(const Options& o, std::ostream& out) {
  ShapesSpec spec;
  spec.num_classes = o.num_classes;
  spec.per_class = o.per_class;
  spec.size = o.size;
  spec.channels = o.channels;
  spec.seed = o.seed;
  const auto rows = synth(o.synth_out, spec, o.stages);
  out << "wrote " << rows.size() << " images to " << o.synth_out << '\n';
  return kExitOk;
}

inline std::vector<LabeledImage> load_for(const RunConfig& c, const fs::path& dir) {
  std::vector<LabeledImage> data = load_dataset(dir, c.K);
  check_training_inputs(data, c.schedule(), c.model());
  return data;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o.config_path);
  const std::vector<LabeledImage> data = load_for(c, c.data_dir);
  const fs::path out_dir = c.out_dir;
  fs::create_directories(out_dir);

  TrainHooks hooks;
  hooks.checkpoint_every = c.checkpoint_every;
  hooks.on_checkpoint = [&](int step, const TrainResult& r) {
    save_checkpoint(out_dir / ("checkpoint_" + std::to_string(step) + ".cdcm"), r.ema, c);
  };
  const int log_every = std::max(1, c.train_steps / 20);
  hooks.on_step = [&](int step, double loss) {
    if (step % log_every == 0 || step == c.train_steps) out << "step " << step << " loss " << loss << '\n';
  };
  const TrainResult r = train(data, c.schedule(), c.model(), c.train(), hooks);
  save_checkpoint(out_dir / "model.cdcm", r.ema, c);
  save_checkpoint(out_dir / "model_raw.cdcm", r.model, c);
  write_loss_csv(out_dir / "loss.csv", r.loss_trace);
  out << "saved " << (out_dir / "model.cdcm").string() << '\n';
  return kExitOk;
}

inline int cmd_sample(const Options& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const VelocityModel<float> model = ck.model();
  if (o.label && (*o.label < 0 || *o.label >= ck.config.num_classes)) {
    throw ConfigError("--class must lie in [0, " + std::to_string(ck.config.num_classes) + ")");
  }
  if (o.cfg_scale < 0.0) throw ConfigError("--cfg-scale must be >= 0");
  if (o.count < 0) throw ConfigError("--count must be >= 0");
  SampleConfig cfg;
  cfg.schedule = ck.config.schedule();
  cfg.guidance_scale = o.cfg_scale;
  cfg.condition = o.label;
  cfg.seed = o.seed;
  cfg.record_intermediates = o.save_intermediates;
  const fs::path dir = o.out_dir.empty() ? fs::path("samples") : fs::path(o.out_dir);
  fs::create_directories(dir);
  const std::vector<SampleResult> results = sample_many(ModelField(model), cfg, o.count);
  for (std::size_t i = 0; i < results.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "sample_%04zu", i);
    write_image(dir / (std::string(stem) + ".rten"), results[i].output);
    if (o.pgm) write_pgm(dir / (std::string(stem) + ".pgm"), results[i].output);
    for (std::size_t k = 0; k < results[i].intermediates.size(); ++k) {
      const std::string name = std::string(stem) + "_stage" + std::to_string(k + 1);
      write_image(dir / (name + ".rten"), results[i].intermediates[k]);
      if (o.pgm) write_pgm(dir / (name + ".pgm"), results[i].intermediates[k]);
    }
  }
  out << "wrote " << results.size() << " samples to " << dir.string() << '\n';
  return kExitOk;
}

inline int cmd_analyze(const Options& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig& c = ck.config;
  const VelocityModel<float> model = ck.model();
  const StageSchedule schedule = c.schedule();
  const std::vector<LabeledImage> data = load_for(c, o.data_dir.empty() ? fs::path(c.data_dir) : fs::path(o.data_dir));
  const std::vector<Image> images = images_of(data);
  const fs::path dir = o.out_dir.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out_dir);
  if (!dir.empty()) fs::create_directories(dir);

  Rng rng({o.seed, 0xC057});
  const CostReport costs = estimate_costs(images, schedule, o.n, rng);
  const CostComparison check = compare_costs(costs, schedule);
  write_costs_csv(dir / "costs.csv", costs, check);
  out << "L_A " << costs.L_A_hat << " +- " << costs.L_A_se << ", L_B " << costs.L_B_hat << " +- " << costs.L_B_se
      << ": " << check.verdict << '\n';

  SampleConfig cfg;
  cfg.schedule = schedule;
  cfg.guidance_scale = o.cfg_scale;
  cfg.condition = o.label;
  cfg.seed = o.seed;
  const ModelField field(model);
  const TimingReport timing = time_inference(field, cfg, o.trials);
  write_timing_csv(dir / "timing.csv", timing);
  out << "cascade " << timing.total_seconds << " s, single stage " << timing.single_stage_seconds << " s\n";

  Rng proj({o.seed, 0x5157});
  const std::vector<double> marginals = per_stage_marginal_check(field, images, cfg, o.eval_samples, proj);
  write_marginals_csv(dir / "marginals.csv", marginals, timing.resolutions);
  for (std::size_t k = 0; k < marginals.size(); ++k) {
    out << "stage " << (k + 1) << " sliced W2 " << marginals[k] << '\n';
  }
  return kExitOk;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o.config_path);
  const std::vector<double> gammas = parse_real_list(o.gammas);
  for (double g : gammas) {
    if (!(g >= 1.0 && g <= 5.0)) throw ConfigError("gamma " + format_real(g) + " outside [1, 5]");
  }
  const std::vector<LabeledImage> data = load_for(c, c.data_dir);
  const std::vector<LabeledImage> held =
      o.held_out_dir.empty() ? data : load_for(c, o.held_out_dir);
  const std::vector<Image> held_images = images_of(held);
  const fs::path dir = o.out_dir.empty() ? fs::path(c.out_dir) : fs::path(o.out_dir);
  fs::create_directories(dir);

  SweepSettings s;
  s.schedule = c.schedule();
  s.model = c.model();
  s.train = c.train();
  s.eval_samples = o.eval_samples;
  s.timing_trials = o.trials;
  s.guidance_scale = o.cfg_scale;
  s.condition = o.label;
  s.seed = o.seed;
  auto path_for = [&](double g) { return dir / ("gamma_" + format_real(g) + ".cdcm"); };
  SweepModelSource source = [&](double g) -> std::optional<VelocityModel<float>> {
    const fs::path p = path_for(g);
    if (o.reuse && fs::exists(p)) return load_checkpoint(p).model();
    RunConfig cg = c;
    cg.gamma = g;
    VelocityModel<float> m = train(data, cg.schedule(), cg.model(), cg.train()).ema;
    save_checkpoint(p, m, cg);
    return m;
  };
  const std::vector<SweepRow> rows = gamma_sweep(data, held_images, s, gammas, source);
  write_gamma_sweep_csv(dir / "gamma_sweep.csv", rows);
  for (const SweepRow& r : rows) {
    out << "gamma " << r.gamma << " sliced W2 " << r.sliced_wasserstein << " inference " << r.inference_seconds
        << " s\n";
  }
  return kExitOk;
}

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns 0 on success, 2 on configuration errors, 1 on runtime failures.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stage flow matching on image pyramids"};
  app.require_subcommand(1);
  Options o;

  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic shapes dataset");
  synth_cmd->add_option("--out", o.synth_out, "Output directory")->capture_default_str();
  synth_cmd->add_option("--num-classes", o.num_classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--per-class", o.per_class, "Images per class")->capture_default_str();
  synth_cmd->add_option("--size", o.size, "Image side length")->capture_default_str();
  synth_cmd->add_option("--channels", o.channels, "Channels")->capture_default_str();
  synth_cmd->add_option("--stages,-K", o.stages, "Cascade depth the size must support")->capture_default_str();
  synth_cmd->add_option("--seed", o.seed, "Generator seed")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", o.config_path, "key=value config file")->required();

  auto* sample_cmd = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample_cmd->add_option("--checkpoint", o.checkpoint, "CDCM checkpoint")->required();
  sample_cmd->add_option("--count", o.count, "Number of samples")->capture_default_str();
  sample_cmd->add_option("--cfg-scale", o.cfg_scale, "Guidance strength")->capture_default_str();
  sample_cmd->add_option("--class", o.label, "Class label (unconditional when absent)");
  sample_cmd->add_option("--seed", o.seed, "Sampling seed")->capture_default_str();
  sample_cmd->add_flag("--save-intermediates", o.save_intermediates, "Also write every stage output");
  sample_cmd->add_flag("--pgm", o.pgm, "Also write PGM previews");
  sample_cmd->add_option("--out", o.out_dir, "Output directory (default: samples)");

  auto* analyze_cmd = app.add_subcommand("analyze", "Transport costs, timing and per-stage marginals");
  analyze_cmd->add_option("--checkpoint", o.checkpoint, "CDCM checkpoint")->required();
  analyze_cmd->add_option("--data-dir", o.data_dir, "Dataset directory (default: the config's data_dir)");
  analyze_cmd->add_option("--n", o.n, "Monte-Carlo draws for the cost estimates")->capture_default_str();
  analyze_cmd->add_option("--samples", o.eval_samples, "Cascades for the marginal check")->capture_default_str();
  analyze_cmd->add_option("--trials", o.trials, "Timing trials")->capture_default_str();
  analyze_cmd->add_option("--cfg-scale", o.cfg_scale, "Guidance strength")->capture_default_str();
  analyze_cmd->add_option("--class", o.label, "Class label (unconditional when absent)");
  analyze_cmd->add_option("--seed", o.seed, "Seed")->capture_default_str();
  analyze_cmd->add_option("--out", o.out_dir, "Report directory (default: next to the checkpoint)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over several diminish factors");
  sweep_cmd->add_option("--gammas", o.gammas, "Comma-separated gamma values")->capture_default_str();
  sweep_cmd->add_option("--config", o.config_path, "key=value config file")->required();
  sweep_cmd->add_option("--held-out-dir", o.held_out_dir, "Evaluation dataset (default: training data)");
  sweep_cmd->add_option("--samples", o.eval_samples, "Cascades per gamma")->capture_default_str();
  sweep_cmd->add_option("--trials", o.trials, "Timing trials")->capture_default_str();
  sweep_cmd->add_option("--cfg-scale", o.cfg_scale, "Guidance strength")->capture_default_str();
  sweep_cmd->add_option("--class", o.label, "Class label (unconditional when absent)");
  sweep_cmd->add_option("--seed", o.seed, "Seed")->capture_default_str();
  sweep_cmd->add_option("--out", o.out_dir, "Output directory (default: the config's out_dir)");
  sweep_cmd->add_flag("--reuse", o.reuse, "Reuse existing per-gamma checkpoints");

  std::vector<const char*> argv{"cdcfm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (*synth_cmd) return cmd_synth(o, out);
    if (*train_cmd) return cmd_train(o, out);
    if (*sample_cmd) return cmd_sample(o, out);
    if (*analyze_cmd) return cmd_analyze(o, out);
    if (*sweep_cmd) return cmd_sweep(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace cdcfm::cli
