#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sdpm/dataset.hpp"
#include "sdpm/denoiser.hpp"
#include "sdpm/schedule.hpp"
#include "sdpm/target_space.hpp"
#include "sdpm/training.hpp"

namespace sdpm {

struct DataConfig {
  std::string path;
  std::vector<ColumnSpec> columns;
  double time_shift_epsilon = 0.0;
};

struct SplitConfig {
  SplitFractions fractions{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
};

struct ScheduleConfig {
  std::size_t steps = 20;
  double offset = kDefaultCosineOffset;
};

struct SamplerConfig {
  std::size_t samples = 1000;                   // K per subject
  std::optional<std::size_t> inference_steps;   // r_new
  std::size_t threads = 0;                      // 0: automatic
  std::optional<double> clip_margin = 1.0;      // unset: no clipping
};

struct MetricConfig {
  double censoring_floor = 1e-4;
  bool grid_include_censored = false;
};

struct RunConfig {
  DataConfig data;
  SplitConfig split;
  TargetMode target_mode = TargetMode::Transformed;
  ScheduleConfig schedule;
  NetConfig network;
  TrainConfig training;
  SamplerConfig sampler;
  MetricConfig metrics;
  std::uint64_t seed = 0;  // master seed for sampling and evaluation

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys take defaults; unknown keys are rejected with their path.
  static RunConfig from_json(const nlohmann::json& j);
  // Stable, indented rendering of to_json().
  std::string canonical() const;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

// Names of fields whose values fall outside the hyperparameter search space
// the defaults are drawn from. Empty for the defaults.
std::vector<std::string> outside_search_space(const RunConfig& cfg);

}  // namespace sdpm
