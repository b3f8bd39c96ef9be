#include "sdpm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "sdpm/errors.hpp"

namespace sdpm {

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas, double s) {
  if (betas.empty()) throw ValidationError("schedule: need at least one step");
  DiffusionSchedule sched;
  sched.s_ = s;
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ValidationError("schedule: beta must lie in (0, 1)");
    sched.alphas_.push_back(1.0 - b);
    prod *= 1.0 - b;
    sched.alpha_bars_.push_back(prod);
  }
  sched.betas_ = std::move(betas);
  sched.step_values_.resize(sched.betas_.size());
  for (std::size_t i = 0; i < sched.step_values_.size(); ++i) sched.step_values_[i] = static_cast<double>(i + 1);
  return sched;
}

void DiffusionSchedule::set_step_values(std::vector<double> values) {
  if (values.size() != betas_.size()) throw ValidationError("schedule: step value count mismatch");
  step_values_ = std::move(values);
}

nlohmann::json DiffusionSchedule::to_json() const {
  return {{"r", steps()}, {"s", s_}, {"betas", betas_}, {"step_values", step_values_}};
}

DiffusionSchedule DiffusionSchedule::from_json(const nlohmann::json& j) {
  auto sched = from_betas(j.at("betas").get<std::vector<double>>(), j.at("s").get<double>());
  if (j.at("r").get<std::size_t>() != sched.steps()) throw ValidationError("schedule: r does not match betas");
  sched.set_step_values(j.at("step_values").get<std::vector<double>>());
  return sched;
}

DiffusionSchedule cosine_schedule(std::size_t r, double s) {
  if (r == 0) throw ValidationError("cosine_schedule: r must be >= 1");
  if (!(s > 0.0)) throw ValidationError("cosine_schedule: s must be positive");
  const double rr = static_cast<double>(r);
  auto f = [&](std::size_t i) {
    const double c = std::cos(((static_cast<double>(i) / rr + s) / (1.0 + s)) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0);
  std::vector<double> betas(r);
  double prev = 1.0;
  for (std::size_t i = 1; i <= r; ++i) {
    const double ab = f(i) / f0;
    betas[i - 1] = std::clamp(1.0 - ab / prev, kBetaMin, kBetaMax);
    prev = ab;
  }
  return DiffusionSchedule::from_betas(std::move(betas), s);
}

DiffusionSchedule rescale_steps(const DiffusionSchedule& trained, std::size_t r_new) {
  if (trained.steps() == 0) throw ValidationError("rescale_steps: empty training schedule");
  DiffusionSchedule sched = cosine_schedule(r_new, trained.offset());
  const auto& tv = trained.step_values();
  const double lo = *std::min_element(tv.begin(), tv.end());
  const double hi = *std::max_element(tv.begin(), tv.end());
  std::vector<double> values(r_new);
  if (r_new == 1) {
    // A single step starts from pure noise: use the noisiest trained value.
    values[0] = hi;
  } else {
    const double span = static_cast<double>(r_new - 1);
    for (std::size_t k = 0; k < r_new; ++k) values[k] = lo + (hi - lo) * static_cast<double>(k) / span;
    values.back() = hi;
  }
  sched.set_step_values(std::move(values));
  return sched;
}

Vec2 to_vec(const LatentTarget& lt) { return {lt.t_tilde, lt.delta_tilde}; }

Vec2 forward_noise(const Vec2& tau0, std::size_t i, const DiffusionSchedule& sched, const Vec2& eps) {
  if (i < 1 || i > sched.steps()) throw ValidationError("forward_sample: step index out of range");
  const double a = std::sqrt(sched.alpha_bar(i));
  const double b = std::sqrt(1.0 - sched.alpha_bar(i));
  return {a * tau0[0] + b * eps[0], a * tau0[1] + b * eps[1]};
}

NoisedSample forward_sample(const Vec2& tau0, std::size_t i, const DiffusionSchedule& sched, Rng& rng) {
  if (i < 1 || i > sched.steps()) throw ValidationError("forward_sample: step index out of range");
  NoisedSample out;
  out.eps = {rng.normal(), rng.normal()};
  out.tau = forward_noise(tau0, i, sched, out.eps);
  return out;
}

}  // namespace sdpm
