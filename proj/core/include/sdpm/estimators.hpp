#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "sdpm/sampler.hpp"

namespace sdpm {

// Strictly increasing positive time points t_1..t_n; t_0 = 0 is implicit.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> points);

  // Unique times with delta = 1 (optionally also censored times).
  static TimeGrid from_event_times(std::span<const double> times, std::span<const int> events,
                                   bool include_censored = false);
  // `count` evenly spaced evaluation points on [0, horizon], endpoints
  // included.
  static std::vector<double> uniform_points(double horizon, std::size_t count);

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  double back() const { return points_.back(); }

 private:
  std::vector<double> points_;
};

// Right-continuous, non-increasing step function. values[0] holds on
// [0, t_1), values[k] on [t_k, t_{k+1}), values[n] for t >= t_n.
class StepSurvivalCurve {
 public:
  StepSurvivalCurve() : values_{1.0} {}
  StepSurvivalCurve(TimeGrid grid, std::vector<double> values);

  const TimeGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }

  double operator()(double t) const;
  // S(t-), the value just before t.
  double left_limit(double t) const;

  void write_csv(std::ostream& os) const;

 private:
  TimeGrid grid_;
  std::vector<double> values_;
};

// Product-limit estimator on its own jump grid (distinct event times). At
// tied times, events are processed before censorings.
StepSurvivalCurve kaplan_meier(std::span<const double> times, std::span<const int> events);
// Kaplan-Meier of the censoring distribution (indicators flipped).
StepSurvivalCurve censoring_km(std::span<const double> times, std::span<const int> events);

StepSurvivalCurve project_to_grid(const StepSurvivalCurve& curve, const TimeGrid& grid);

// Kaplan-Meier over the generated pairs, projected onto `grid`. Generated
// times <= 0 (possible only in the raw ablation mode) are treated as events
// or censorings immediately after 0.
StepSurvivalCurve survival_from_samples(const GeneratedOutcomes& out, const TimeGrid& grid);
// Same, without projection (jumps at the generated times).
StepSurvivalCurve survival_from_samples(const GeneratedOutcomes& out);

// Integral of the curve from 0 to the last grid point.
double restricted_mean(const StepSurvivalCurve& curve);

}  // namespace sdpm
