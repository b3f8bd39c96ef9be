#pragma once

// Literal O(n^2) reference implementations of the estimators and metrics,
// written directly from the textbook definitions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "sdpm/estimators.hpp"
#include "sdpm/metrics.hpp"

namespace oracle {

// Product-limit value at t: product over event times u <= t (or u < t when
// `strict`) of (1 - d_u / n_u).
inline double km_at(const std::vector<double>& times, const std::vector<int>& events, double t, bool strict = false) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (events[i] == 1) event_times.insert(times[i]);
  }
  double s = 1.0;
  for (double u : event_times) {
    if (strict ? !(u < t) : !(u <= t)) continue;
    double at_risk = 0.0, deaths = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] >= u) at_risk += 1.0;
      if (times[i] == u && events[i] == 1) deaths += 1.0;
    }
    s *= 1.0 - deaths / at_risk;
  }
  return s;
}

inline std::vector<int> flip(const std::vector<int>& events) {
  std::vector<int> out;
  for (int e : events) out.push_back(1 - e);
  return out;
}

inline double c_index(const std::vector<double>& times, const std::vector<int>& events,
                      const std::vector<double>& scores, std::size_t* pairs_out = nullptr) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!(times[i] < times[j]) || events[i] != 1) continue;
      ++pairs;
      if (scores[i] < scores[j]) {
        num += 1.0;
      } else if (scores[i] == scores[j]) {
        num += 0.5;
      }
    }
  }
  if (pairs_out) *pairs_out = pairs;
  return pairs ? num / static_cast<double>(pairs) : std::nan("");
}

inline std::optional<double> td_auc(const sdpm::EvaluationInput& ev, double t) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < ev.times.size(); ++i) {
    if (!(ev.times[i] <= t && ev.events[i] == 1)) continue;
    for (std::size_t j = 0; j < ev.times.size(); ++j) {
      if (!(ev.times[j] > t)) continue;
      pairs += 1.0;
      const double si = ev.curves[i](t), sj = ev.curves[j](t);
      if (si < sj) {
        num += 1.0;
      } else if (si == sj) {
        num += 0.5;
      }
    }
  }
  if (pairs == 0.0) return std::nullopt;
  return num / pairs;
}

// Jump-weighted average of AUC over test event times where it is defined.
inline std::optional<double> integrated_auc(const sdpm::EvaluationInput& ev) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < ev.times.size(); ++i) {
    if (ev.events[i] == 1) event_times.insert(ev.times[i]);
  }
  double num = 0.0, den = 0.0;
  for (double t : event_times) {
    const auto auc = oracle::td_auc(ev, t);
    if (!auc) continue;
    const double w = km_at(ev.times, ev.events, t, true) - km_at(ev.times, ev.events, t);
    num += *auc * w;
    den += w;
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

// G is given as the censoring training set.
inline double brier(const sdpm::EvaluationInput& ev, const std::vector<double>& g_times,
                    const std::vector<int>& g_events, double t) {
  const auto g_event = flip(g_events);
  double sum = 0.0;
  for (std::size_t i = 0; i < ev.times.size(); ++i) {
    const double s = ev.curves[i](t);
    if (ev.times[i] <= t && ev.events[i] == 1) {
      const double g = std::max(km_at(g_times, g_event, ev.times[i], true), ev.censoring_floor);
      sum += s * s / g;
    }
    if (ev.times[i] > t) {
      const double g = std::max(km_at(g_times, g_event, t), ev.censoring_floor);
      sum += (1.0 - s) * (1.0 - s) / g;
    }
  }
  return sum / static_cast<double>(ev.times.size());
}

// Midpoint rule on a superset of every point where the integrand can jump;
// exact for piecewise-constant right-continuous integrands.
inline double ibs(const sdpm::EvaluationInput& ev, const std::vector<double>& g_times,
                  const std::vector<int>& g_events) {
  std::set<double> cuts{0.0, ev.t_max};
  for (double t : ev.times) cuts.insert(t);
  for (double t : g_times) cuts.insert(t);
  for (double t : ev.curves[0].grid().points()) cuts.insert(t);
  std::vector<double> pts;
  for (double t : cuts) {
    if (t >= 0.0 && t <= ev.t_max) pts.push_back(t);
  }
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double mid = 0.5 * (pts[k] + pts[k + 1]);
    integral += oracle::brier(ev, g_times, g_events, mid) * (pts[k + 1] - pts[k]);
  }
  return integral / ev.t_max;
}

struct Instance {
  sdpm::EvaluationInput ev;
  std::vector<double> train_times;
  std::vector<int> train_events;
};

// Random instance with at most `max_n` test subjects. Times come from a small
// lattice so ties in times, scores and curve values are common.
inline Instance random_instance(std::mt19937_64& gen, std::size_t max_n = 10) {
  std::uniform_int_distribution<int> size_d(2, static_cast<int>(max_n));
  std::uniform_int_distribution<int> lattice(1, 12);
  std::bernoulli_distribution coin(0.6);
  const auto draw_time = [&] { return 0.5 * lattice(gen); };

  Instance inst;
  const int n_train = size_d(gen);
  for (int i = 0; i < n_train; ++i) {
    inst.train_times.push_back(draw_time());
    inst.train_events.push_back(coin(gen) ? 1 : 0);
  }
  inst.train_events[0] = 1;  // non-empty grid
  const auto grid = sdpm::TimeGrid::from_event_times(inst.train_times, inst.train_events);

  const int n = size_d(gen);
  std::uniform_int_distribution<int> level(0, 4);
  std::vector<sdpm::StepSurvivalCurve> curves;
  for (int i = 0; i < n; ++i) {
    inst.ev.times.push_back(draw_time());
    inst.ev.events.push_back(coin(gen) ? 1 : 0);
    std::vector<double> drops(grid.size() + 1);
    double v = 1.0;
    drops[0] = 1.0;
    for (std::size_t k = 1; k < drops.size(); ++k) {
      v = std::max(0.0, v - 0.125 * level(gen) * 0.5);
      drops[k] = v;
    }
    curves.push_back(sdpm::StepSurvivalCurve(grid, drops));
  }
  inst.ev = sdpm::make_evaluation_input(std::move(curves), inst.ev.times, inst.ev.events,
                                        sdpm::censoring_km(inst.train_times, inst.train_events));
  return inst;
}

}  // namespace oracle
