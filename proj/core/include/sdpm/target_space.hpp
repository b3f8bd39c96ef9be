#pragma once

#include <span>

#include <nlohmann/json_fwd.hpp>

#include "sdpm/rng.hpp"

namespace sdpm {

enum class TargetMode {
  // log-standardized time, Gaussian-mixture censoring label
  Transformed,
  // raw time, deterministic {-1, +1} censoring label (ablation)
  RawAblation,
};

const char* to_string(TargetMode mode);
TargetMode target_mode_from_string(const std::string& s);

struct LatentTarget {
  double t_tilde = 0.0;
  double delta_tilde = 0.0;
};

struct Outcome {
  double time = 0.0;
  int event = 0;
};

// Maps observed (t, delta) to the 2-D diffusion target and back.
struct TargetTransform {
  double mu = 0.0;     // mean of ln t over the fitted times
  double sigma = 1.0;  // population std of ln t
  double mixture_mean = 1.0;
  double mixture_var = 0.25;  // variance; component std is sqrt(mixture_var)
  TargetMode mode = TargetMode::Transformed;

  // Deterministic time coordinate of the encoding.
  double encode_time(double t) const;
  // Draws a fresh delta_tilde every call in transformed mode.
  LatentTarget encode(double t, int delta, Rng& rng) const;
  Outcome decode(const LatentTarget& lt) const;

  nlohmann::json to_json() const;
  static TargetTransform from_json(const nlohmann::json& j);
};

TargetTransform fit_target_transform(std::span<const double> times, TargetMode mode = TargetMode::Transformed);

}  // namespace sdpm
