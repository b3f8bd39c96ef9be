#include "sdpm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "sdpm/csv.hpp"
#include "sdpm/errors.hpp"

namespace sdpm {

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i] > 0.0) || !std::isfinite(points_[i])) throw ValidationError("time grid: points must be positive");
    if (i > 0 && !(points_[i] > points_[i - 1])) throw ValidationError("time grid: points must be strictly increasing");
  }
}

TimeGrid TimeGrid::from_event_times(std::span<const double> times, std::span<const int> events,
                                    bool include_censored) {
  if (times.size() != events.size()) throw ValidationError("time grid: length mismatch");
  std::vector<double> pts;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (events[i] == 1 || include_censored) pts.push_back(times[i]);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return TimeGrid(std::move(pts));
}

std::vector<double> TimeGrid::uniform_points(double horizon, std::size_t count) {
  if (!(horizon > 0.0) || count < 2) throw ValidationError("uniform grid: need horizon > 0 and >= 2 points");
  std::vector<double> pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    pts[i] = horizon * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  pts.back() = horizon;
  return pts;
}

StepSurvivalCurve::StepSurvivalCurve(TimeGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size() + 1) throw ValidationError("survival curve: need grid size + 1 values");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) throw ValidationError("survival curve: values must lie in [0, 1]");
    if (i > 0 && values_[i] > values_[i - 1]) throw ValidationError("survival curve: values must be non-increasing");
  }
}

double StepSurvivalCurve::operator()(double t) const {
  const auto& p = grid_.points();
  return values_[static_cast<std::size_t>(std::upper_bound(p.begin(), p.end(), t) - p.begin())];
}

double StepSurvivalCurve::left_limit(double t) const {
  const auto& p = grid_.points();
  return values_[static_cast<std::size_t>(std::lower_bound(p.begin(), p.end(), t) - p.begin())];
}

void StepSurvivalCurve::write_csv(std::ostream& os) const {
  os << "t_left,value\n";
  os << "0," << csv::format_double(values_[0]) << '\n';
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    os << csv::format_double(grid_.points()[i]) << ',' << csv::format_double(values_[i + 1]) << '\n';
  }
}

StepSurvivalCurve kaplan_meier(std::span<const double> times, std::span<const int> events) {
  if (times.size() != events.size()) throw ValidationError("kaplan_meier: length mismatch");
  if (times.empty()) throw ValidationError("kaplan_meier: empty input");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  if (!(times[order.front()] > 0.0) || !std::isfinite(times[order.back()])) {
    throw DomainError("kaplan_meier: times must be positive and finite");
  }

  std::vector<double> jumps;
  std::vector<double> values{1.0};
  double s = 1.0;
  std::size_t at_risk = times.size();
  for (std::size_t k = 0; k < order.size();) {
    const double t = times[order[k]];
    std::size_t deaths = 0, total = 0;
    while (k < order.size() && times[order[k]] == t) {
      deaths += events[order[k]] == 1;
      ++total;
      ++k;
    }
    if (deaths > 0) {
      s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      jumps.push_back(t);
      values.push_back(s);
    }
    at_risk -= total;
  }
  return StepSurvivalCurve(TimeGrid(std::move(jumps)), std::move(values));
}

StepSurvivalCurve censoring_km(std::span<const double> times, std::span<const int> events) {
  std::vector<int> flipped(events.size());
  std::transform(events.begin(), events.end(), flipped.begin(), [](int e) { return e == 1 ? 0 : 1; });
  return kaplan_meier(times, flipped);
}

StepSurvivalCurve project_to_grid(const StepSurvivalCurve& curve, const TimeGrid& grid) {
  std::vector<double> values;
  values.reserve(grid.size() + 1);
  values.push_back(curve(0.0));
  for (double t : grid.points()) values.push_back(curve(t));
  return StepSurvivalCurve(grid, std::move(values));
}

StepSurvivalCurve survival_from_samples(const GeneratedOutcomes& out) {
  if (out.pairs.empty()) throw ValidationError("survival_from_samples: no samples");
  std::vector<double> times;
  std::vector<int> events;
  times.reserve(out.size());
  events.reserve(out.size());
  for (const auto& p : out.pairs) {
    times.push_back(p.time > 0.0 ? p.time : std::numeric_limits<double>::min());
    events.push_back(p.event);
  }
  return kaplan_meier(times, events);
}

StepSurvivalCurve survival_from_samples(const GeneratedOutcomes& out, const TimeGrid& grid) {
  return project_to_grid(survival_from_samples(out), grid);
}

double restricted_mean(const StepSurvivalCurve& curve) {
  const auto& p = curve.grid().points();
  const auto& v = curve.values();
  double area = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    area += v[i] * (p[i] - prev);
    prev = p[i];
  }
  return area;
}

}  // namespace sdpm
