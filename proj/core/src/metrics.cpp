#include "sdpm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdpm/errors.hpp"

namespace sdpm {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks <= i.
  std::size_t prefix(std::size_t i) const {
    std::size_t s = 0;
    for (++i; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::size_t> tree_;
};

double floored(double g, double floor) { return std::max(g, floor); }

}  // namespace

void EvaluationInput::validate() const {
  const std::size_t n = times.size();
  if (n == 0) throw ValidationError("evaluation: no test subjects");
  if (events.size() != n || curves.size() != n || risk_scores.size() != n) {
    throw ValidationError("evaluation: inconsistent input lengths");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (curves[i].grid().points() != curves[0].grid().points()) {
      throw ValidationError("evaluation: curves must share one grid");
    }
  }
  if (!(censoring_floor > 0.0)) throw ValidationError("evaluation: censoring floor must be positive");
}

EvaluationInput make_evaluation_input(std::vector<StepSurvivalCurve> curves, std::vector<double> times,
                                      std::vector<int> events, StepSurvivalCurve censoring,
                                      double censoring_floor) {
  EvaluationInput ev;
  ev.risk_scores.reserve(curves.size());
  for (const auto& c : curves) ev.risk_scores.push_back(restricted_mean(c));
  ev.t_max = curves.empty() || curves[0].grid().empty() ? 0.0 : curves[0].grid().back();
  ev.curves = std::move(curves);
  ev.times = std::move(times);
  ev.events = std::move(events);
  ev.censoring = std::move(censoring);
  ev.censoring_floor = censoring_floor;
  ev.validate();
  return ev;
}

double c_index(const EvaluationInput& ev) {
  const std::size_t n = ev.times.size();
  if (ev.events.size() != n || ev.risk_scores.size() != n) throw ValidationError("c_index: length mismatch");

  std::vector<double> sorted_scores(ev.risk_scores);
  std::sort(sorted_scores.begin(), sorted_scores.end());
  sorted_scores.erase(std::unique(sorted_scores.begin(), sorted_scores.end()), sorted_scores.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(
        std::lower_bound(sorted_scores.begin(), sorted_scores.end(), ev.risk_scores[i]) - sorted_scores.begin());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ev.times[a] > ev.times[b]; });

  // Walk times in descending order; the tree holds subjects with strictly
  // larger times than the current group.
  Fenwick tree(sorted_scores.size());
  std::size_t inserted = 0;
  std::size_t pairs = 0, concordant = 0, ties = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && ev.times[order[end]] == ev.times[order[k]]) ++end;
    for (std::size_t m = k; m < end; ++m) {
      const std::size_t i = order[m];
      if (ev.events[i] != 1) continue;
      const std::size_t le = tree.prefix(rank[i]);
      const std::size_t lt = rank[i] == 0 ? 0 : tree.prefix(rank[i] - 1);
      pairs += inserted;
      concordant += inserted - le;
      ties += le - lt;
    }
    for (std::size_t m = k; m < end; ++m) tree.add(rank[order[m]]);
    inserted += end - k;
    k = end;
  }
  if (pairs == 0) throw ValidationError("c_index: no comparable pairs");
  return (static_cast<double>(concordant) + 0.5 * static_cast<double>(ties)) / static_cast<double>(pairs);
}

std::optional<double> td_auc(const EvaluationInput& ev, double t) {
  std::vector<double> cases, controls;
  for (std::size_t i = 0; i < ev.times.size(); ++i) {
    const double s = ev.curves[i](t);
    if (ev.times[i] <= t) {
      if (ev.events[i] == 1) cases.push_back(s);
    } else {
      controls.push_back(s);
    }
  }
  if (cases.empty() || controls.empty()) return std::nullopt;
  std::sort(controls.begin(), controls.end());
  std::size_t concordant = 0, ties = 0;
  for (double s : cases) {
    const auto lo = std::lower_bound(controls.begin(), controls.end(), s);
    const auto hi = std::upper_bound(lo, controls.end(), s);
    concordant += static_cast<std::size_t>(controls.end() - hi);
    ties += static_cast<std::size_t>(hi - lo);
  }
  return (static_cast<double>(concordant) + 0.5 * static_cast<double>(ties)) /
         (static_cast<double>(cases.size()) * static_cast<double>(controls.size()));
}

std::vector<double> evaluable_times(const EvaluationInput& ev) {
  std::vector<double> event_times;
  for (std::size_t i = 0; i < ev.times.size(); ++i) {
    if (ev.events[i] == 1) event_times.push_back(ev.times[i]);
  }
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
  const double t_last = ev.times.empty() ? 0.0 : *std::max_element(ev.times.begin(), ev.times.end());
  std::vector<double> out;
  for (double t : event_times) {
    if (t < t_last) out.push_back(t);  // a control needs t_j > t
  }
  return out;
}

double integrated_auc(const EvaluationInput& ev, const StepSurvivalCurve& km_test) {
  double weighted = 0.0, mass = 0.0;
  for (double t : evaluable_times(ev)) {
    const auto auc = td_auc(ev, t);
    if (!auc) continue;
    const double w = km_test.left_limit(t) - km_test(t);
    weighted += *auc * w;
    mass += w;
  }
  if (!(mass > 0.0)) throw ValidationError("integrated_auc: zero normalization mass");
  return weighted / mass;
}

double brier(const EvaluationInput& ev, double t) {
  const std::size_t n = ev.times.size();
  const double g_t = floored(ev.censoring(t), ev.censoring_floor);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = ev.curves[i](t);
    if (ev.times[i] <= t) {
      if (ev.events[i] == 1) sum += s * s / floored(ev.censoring.left_limit(ev.times[i]), ev.censoring_floor);
    } else {
      sum += (1.0 - s) * (1.0 - s) / g_t;
    }
  }
  return sum / static_cast<double>(n);
}

std::vector<double> ibs_breakpoints(const EvaluationInput& ev) {
  std::vector<double> pts{0.0};
  const auto keep = [&](double t) {
    if (t > 0.0 && t < ev.t_max) pts.push_back(t);
  };
  if (!ev.curves.empty()) {
    for (double t : ev.curves[0].grid().points()) keep(t);
  }
  for (double t : ev.times) keep(t);
  for (double t : ev.censoring.grid().points()) keep(t);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

double ibs(const EvaluationInput& ev) {
  if (!(ev.t_max > 0.0)) throw ValidationError("ibs: horizon must be positive");
  const auto pts = ibs_breakpoints(ev);
  double integral = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double right = k + 1 < pts.size() ? pts[k + 1] : ev.t_max;
    integral += brier(ev, pts[k]) * (right - pts[k]);
  }
  return integral / ev.t_max;
}

double ks_distance(const StepSurvivalCurve& s1, const StepSurvivalCurve& s2, std::span<const double> points) {
  double d = 0.0;
  for (double t : points) d = std::max(d, std::abs(s1(t) - s2(t)));
  return d;
}

double ks_distance(const StepSurvivalCurve& s1, const std::function<double(double)>& s2,
                   std::span<const double> points) {
  double d = 0.0;
  for (double t : points) d = std::max(d, std::abs(s1(t) - s2(t)));
  return d;
}

}  // namespace sdpm
