#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdpm/checkpoint.hpp"
#include "sdpm/config.hpp"
#include "sdpm/errors.hpp"
#include "sdpm/experiments.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sdpm::ValidationError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw sdpm::ValidationError(path + ": malformed JSON: " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival diffusion model: train, sample, evaluate and synthetic studies"};
  app.require_subcommand(1);

  std::string config_path, second_config_path, out, checkpoint_path, input_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples, inference_steps, threads;
  std::optional<double> clip_margin;
  bool no_clip = false;
  sdpm::SynthOptions synth;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--seed", seed, "Override training.seed");

  auto* sample = app.add_subcommand("sample", "Generate (t, delta) pairs per subject");
  sample->add_option("--checkpoint", checkpoint_path)->required();
  sample->add_option("--input", input_path, "Features CSV")->required();
  sample->add_option("--out", out, "Output CSV")->required();
  sample->add_option("--samples", samples, "Pairs per subject (default 1000)");
  sample->add_option("--inference-steps", inference_steps, "Rescale to this many reverse steps");
  sample->add_option("--seed", seed);
  sample->add_option("--threads", threads);
  auto* sample_margin = sample->add_option("--clip-margin", clip_margin, "Clean-latent clipping margin (default 1)");
  sample->add_flag("--no-clip", no_clip, "Disable clean-latent clipping")->excludes(sample_margin);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a labelled CSV");
  evaluate->add_option("--checkpoint", checkpoint_path)->required();
  evaluate->add_option("--input", input_path, "Test CSV")->required();
  evaluate->add_option("--out", out, "Output directory")->required();
  evaluate->add_option("--config", config_path, "Run config supplying sampler and metric options");
  evaluate->add_option("--samples", samples, "Pairs per subject");
  evaluate->add_option("--inference-steps", inference_steps, "Rescale to this many reverse steps");
  evaluate->add_option("--seed", seed);
  evaluate->add_option("--threads", threads);
  auto* eval_margin = evaluate->add_option("--clip-margin", clip_margin, "Clean-latent clipping margin");
  evaluate->add_flag("--no-clip", no_clip, "Disable clean-latent clipping")->excludes(eval_margin);

  auto* synth_cmd = app.add_subcommand("synth", "Write a Cox-Weibull synthetic dataset");
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->add_option("--rows", synth.rows);
  synth_cmd->add_option("--features", synth.features);
  synth_cmd->add_option("--event-rate", synth.event_rate);
  synth_cmd->add_option("--lambda", synth.lambda);
  synth_cmd->add_option("--nu", synth.nu);
  synth_cmd->add_option("--seed", synth.seed);

  auto* study = app.add_subcommand("synth-study", "KS study against analytic Cox-Weibull curves");
  study->add_option("--config", config_path, "Study config (JSON)")->required();
  study->add_option("--out", out, "Output directory")->required();
  study->add_option("--seed", seed);

  auto* ablation = app.add_subcommand("ablation", "Compare transformed and raw target modes");
  ablation->add_option("--config", config_path, "First run config")->required();
  ablation->add_option("--config-ablated", second_config_path, "Second run config")->required();
  ablation->add_option("--out", out, "Output directory")->required();

  auto* describe = app.add_subcommand("describe", "Print a checkpoint or the canonical form of a config");
  auto* describe_ckpt = describe->add_option("--checkpoint", checkpoint_path);
  auto* describe_cfg = describe->add_option("--config", config_path);
  describe_ckpt->excludes(describe_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      sdpm::RunConfig cfg = sdpm::load_config(config_path);
      if (seed) cfg.training.seed = *seed;
      const auto res = sdpm::cmd_train(cfg, out);
      std::cout << "trained: best epoch " << res.history.best_epoch << ", validation loss "
                << res.history.best_validation_loss << "\n";
    } else if (sample->parsed()) {
      sdpm::EvalOptions opts;
      opts.samples = samples.value_or(opts.samples);
      opts.inference_steps = inference_steps;
      opts.seed = seed.value_or(0);
      opts.threads = threads.value_or(0);
      if (clip_margin) opts.clip_margin = clip_margin;
      if (no_clip) opts.clip_margin.reset();
      sdpm::cmd_sample(checkpoint_path, input_path, opts, out);
    } else if (evaluate->parsed()) {
      sdpm::EvalOptions opts;
      if (!config_path.empty()) {
        const auto cfg = sdpm::load_config(config_path);
        opts.samples = cfg.sampler.samples;
        opts.inference_steps = cfg.sampler.inference_steps;
        opts.threads = cfg.sampler.threads;
        opts.clip_margin = cfg.sampler.clip_margin;
        opts.seed = cfg.seed;
        opts.metrics = cfg.metrics;
      }
      if (samples) opts.samples = *samples;
      if (inference_steps) opts.inference_steps = inference_steps;
      if (seed) opts.seed = *seed;
      if (threads) opts.threads = *threads;
      if (clip_margin) opts.clip_margin = clip_margin;
      if (no_clip) opts.clip_margin.reset();
      const auto res = sdpm::cmd_evaluate(checkpoint_path, input_path, opts, out);
      std::cout << "c_index " << res.report["c_index"] << "\nintegrated_auc " << res.report["integrated_auc"]
                << "\nibs " << res.report["ibs"] << "\n";
    } else if (synth_cmd->parsed()) {
      const auto res = sdpm::cmd_synth(synth, out);
      std::cout << "event rate " << sdpm::event_rate(res.dataset) << ", c_max " << res.model.c_max << "\n";
    } else if (study->parsed()) {
      auto cfg = sdpm::SynthStudyConfig::from_json(read_json(config_path));
      if (seed) cfg.seed = *seed;
      const auto res = sdpm::cmd_synth_study(cfg, out);
      std::cout << res.table.dump(2) << "\n";
    } else if (ablation->parsed()) {
      const auto report =
          sdpm::cmd_ablation(sdpm::load_config(config_path), sdpm::load_config(second_config_path), out);
      std::cout << report.dump(2) << "\n";
    } else if (describe->parsed()) {
      if (!checkpoint_path.empty()) {
        sdpm::describe_checkpoint(sdpm::load_checkpoint(checkpoint_path), std::cout);
      } else if (!config_path.empty()) {
        std::cout << sdpm::load_config(config_path).canonical();
      } else {
        std::cout << sdpm::RunConfig{}.canonical();
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sdpm::exit_code_for(e);
  }
  return 0;
}
