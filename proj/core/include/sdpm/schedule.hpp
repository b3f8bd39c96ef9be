#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sdpm/rng.hpp"
#include "sdpm/target_space.hpp"

namespace sdpm {

using Vec2 = std::array<double, 2>;

inline constexpr double kBetaMin = 1e-5;
inline constexpr double kBetaMax = 0.999;
inline constexpr double kDefaultCosineOffset = 0.008;

// Variance schedule for steps i = 1..r. Accessors take the 1-based step index.
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  // Builds alphas and alpha_bars from (already clipped) betas; step values
  // default to the raw indices 1..r.
  static DiffusionSchedule from_betas(std::vector<double> betas, double s = kDefaultCosineOffset);

  std::size_t steps() const { return betas_.size(); }
  double offset() const { return s_; }
  double beta(std::size_t i) const { return betas_.at(i - 1); }
  double alpha(std::size_t i) const { return alphas_.at(i - 1); }
  double alpha_bar(std::size_t i) const { return alpha_bars_.at(i - 1); }
  double step_value(std::size_t i) const { return step_values_.at(i - 1); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  const std::vector<double>& step_values() const { return step_values_; }

  void set_step_values(std::vector<double> values);

  nlohmann::json to_json() const;
  static DiffusionSchedule from_json(const nlohmann::json& j);

 private:
  double s_ = kDefaultCosineOffset;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> step_values_;
};

// Squared-cosine schedule: f(i) = cos^2(((i/r + s)/(1+s)) * pi/2), alpha_bar_i =
// f(i)/f(0), beta_i = 1 - alpha_bar_i/alpha_bar_{i-1} clipped to
// [kBetaMin, kBetaMax]; alpha_bars are then recomputed from the clipped betas.
DiffusionSchedule cosine_schedule(std::size_t r, double s = kDefaultCosineOffset);

// Fresh cosine schedule with r_new steps whose step values are linearly mapped
// onto the step-value range of `trained`.
DiffusionSchedule rescale_steps(const DiffusionSchedule& trained, std::size_t r_new);

Vec2 to_vec(const LatentTarget& lt);

struct NoisedSample {
  Vec2 tau;
  Vec2 eps;
};

// tau_i = sqrt(alpha_bar_i) * tau0 + sqrt(1 - alpha_bar_i) * eps
Vec2 forward_noise(const Vec2& tau0, std::size_t i, const DiffusionSchedule& sched, const Vec2& eps);
NoisedSample forward_sample(const Vec2& tau0, std::size_t i, const DiffusionSchedule& sched, Rng& rng);

}  // namespace sdpm
