#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sdpm/estimators.hpp"

namespace sdpm {

struct EvaluationInput {
  std::vector<StepSurvivalCurve> curves;  // one per test subject, shared grid
  std::vector<double> risk_scores;        // restricted mean per subject
  std::vector<double> times;
  std::vector<int> events;
  StepSurvivalCurve censoring;            // G-hat from the training data
  double censoring_floor = 1e-4;
  double t_max = 0.0;                     // IBS horizon (last training-grid point)

  std::size_t size() const { return times.size(); }
  void validate() const;
};

// Fills risk_scores with restricted_mean of each curve and t_max with the
// last point of the curves' grid.
EvaluationInput make_evaluation_input(std::vector<StepSurvivalCurve> curves, std::vector<double> times,
                                      std::vector<int> events, StepSurvivalCurve censoring,
                                      double censoring_floor = 1e-4);

// Harrell's C over pairs t_i < t_j with delta_i = 1; concordant when
// score_i < score_j, score ties count 0.5.
double c_index(const EvaluationInput& ev);

// Cumulative/dynamic AUC: cases t_i <= t with delta_i = 1, controls t_j > t.
// Empty when either group is empty.
std::optional<double> td_auc(const EvaluationInput& ev, double t);

// Test event times at which td_auc is defined.
std::vector<double> evaluable_times(const EvaluationInput& ev);

// Sum of AUC(t) times the KM jump at t over evaluable times, divided by the
// total jump mass over those times.
double integrated_auc(const EvaluationInput& ev, const StepSurvivalCurve& km_test);

// IPCW Brier score at t.
double brier(const EvaluationInput& ev, double t);

// (1 / t_max) * integral of brier over [0, t_max], summed exactly over the
// breakpoints of the piecewise-constant integrand.
double ibs(const EvaluationInput& ev);

// Breakpoints used by ibs: 0, curve grid, test times, censoring grid, all
// clipped to [0, t_max).
std::vector<double> ibs_breakpoints(const EvaluationInput& ev);

// max over points of |s1(t) - s2(t)|.
double ks_distance(const StepSurvivalCurve& s1, const StepSurvivalCurve& s2, std::span<const double> points);
double ks_distance(const StepSurvivalCurve& s1, const std::function<double(double)>& s2,
                   std::span<const double> points);

}  // namespace sdpm
