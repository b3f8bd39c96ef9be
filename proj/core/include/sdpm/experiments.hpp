#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "sdpm/checkpoint.hpp"
#include "sdpm/config.hpp"
#include "sdpm/dataset.hpp"
#include "sdpm/estimators.hpp"
#include "sdpm/metrics.hpp"
#include "sdpm/sampler.hpp"
#include "sdpm/synthetic.hpp"
#include "sdpm/training.hpp"

namespace sdpm {

struct TrainOutcome {
  RawTable raw;
  SplitIndices split;
  SurvivalDataset train;
  SurvivalDataset validation;
  SurvivalDataset test;
  Checkpoint checkpoint;
  TrainHistory history;
  nlohmann::json report;
};

// Load, split, fit preprocessing and target transform on the training fold,
// then train the denoiser.
TrainOutcome train_from_config(const RunConfig& cfg);

// train_from_config plus artifacts in out_dir: checkpoint.sdpm,
// train_report.json, loss_history.csv, config.json and the three split CSVs.
// Divergence is raised as NumericError after the report is written.
TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_dir);

struct EvalOptions {
  std::size_t samples = 1000;
  std::optional<std::size_t> inference_steps;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: worker_threads()
  std::optional<double> clip_margin = 1.0;
  MetricConfig metrics;
};

struct EvaluationResult {
  nlohmann::json report;  // depends only on inputs and seed
  std::vector<GeneratedOutcomes> outcomes;
  EvaluationInput input;
  double generation_seconds = 0.0;
};

DiffusionSchedule inference_schedule(const Checkpoint& ckpt, std::optional<std::size_t> inference_steps);
TimeGrid training_grid(const Checkpoint& ckpt, bool include_censored = false);
// Clipping box for generation from `ckpt`; none in raw-ablation mode or
// without a margin.
std::optional<LatentBox> sampling_box(const Checkpoint& ckpt, std::optional<double> clip_margin);

EvaluationResult evaluate_checkpoint(const Checkpoint& ckpt, const SurvivalDataset& test, const EvalOptions& opts);

// Writes report.json (deterministic), timing.json, brier_series.csv,
// auc_series.csv and survival_curves.csv to out_dir.
EvaluationResult cmd_evaluate(const std::string& checkpoint_path, const std::string& test_csv,
                              const EvalOptions& opts, const std::string& out_dir);

// Generated pairs as CSV: subject_id,sample_id,t,delta.
void cmd_sample(const std::string& checkpoint_path, const std::string& features_csv, const EvalOptions& opts,
                const std::string& out_csv);

struct SynthOptions {
  std::size_t rows = 500;
  std::size_t features = 6;
  double event_rate = 0.5;
  double lambda = 1e-10;
  double nu = 4.0;
  std::uint64_t seed = 0;
};

struct SynthOutput {
  CoxWeibullModel model;
  Eigen::MatrixXd xs;
  SurvivalDataset dataset;
  std::uint64_t seed = 0;
  nlohmann::json to_json() const;
};

SynthOutput make_synthetic(const SynthOptions& opts);
// Writes data.csv, model.json and columns.json (a config fragment) to out_dir.
SynthOutput cmd_synth(const SynthOptions& opts, const std::string& out_dir);

struct SynthStudyConfig {
  RunConfig base;  // data section is filled per regime
  std::size_t rows = 500;
  std::size_t features = 6;
  std::vector<double> event_rates{0.25, 0.50, 0.75};
  std::vector<std::size_t> samples{100, 500, 2000};
  double horizon = 500.0;
  std::size_t grid_points = 1000;
  double lambda = 1e-10;
  double nu = 4.0;
  std::uint64_t seed = 0;
  bool write_curves = true;
  // Project each generated-sample curve onto the training event grid before
  // measuring KS; by default the curve keeps its own jumps.
  bool project_to_training_grid = false;

  nlohmann::json to_json() const;
  static SynthStudyConfig from_json(const nlohmann::json& j);
};

struct RegimeResult {
  double target_event_rate = 0.0;
  double data_event_rate = 0.0;
  CoxWeibullModel model;
  std::vector<double> mean_ks;               // one per K
  std::vector<double> generated_event_rate;  // one per K
  std::string directory;
  std::optional<TrainOutcome> trained;
};

struct SynthStudyResult {
  std::vector<RegimeResult> regimes;
  nlohmann::json table;
};

// Per regime: calibrate, generate, train, then mean KS distance between
// model curves and analytic curves on the uniform grid for each K. Writes
// ks_table.csv, ks_table.json and per-regime directories under out_dir.
SynthStudyResult cmd_synth_study(const SynthStudyConfig& cfg, const std::string& out_dir);

// Trains and evaluates both configs, which may differ only in target mode.
nlohmann::json cmd_ablation(const RunConfig& first, const RunConfig& second, const std::string& out_dir);

// Exit codes: 0 success, 1 validation error, 2 runtime failure.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace sdpm
