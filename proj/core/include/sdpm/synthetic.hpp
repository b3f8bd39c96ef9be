#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "sdpm/dataset.hpp"
#include "sdpm/rng.hpp"

namespace sdpm {

// S(t | x) = exp(-lambda * t^nu * exp(b . x)); censoring C ~ U[0, c_max].
struct CoxWeibullModel {
  std::vector<double> b;
  double lambda = 1e-10;
  double nu = 4.0;
  double c_max = 0.0;  // zero until calibrated

  void validate(bool require_c_max = true) const;
  double linear_predictor(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static CoxWeibullModel from_json(const nlohmann::json& j);
};

// Coefficients drawn from U[-1, 1].
CoxWeibullModel random_cox_weibull(std::size_t d, Rng& rng, double lambda = 1e-10, double nu = 4.0);

double analytic_survival(const CoxWeibullModel& model, std::span<const double> x, double t);

// Inverse of analytic_survival in t for a fixed survival level u in (0, 1).
double event_time_from_uniform(const CoxWeibullModel& model, std::span<const double> x, double u);
double sample_event_time(const CoxWeibullModel& model, std::span<const double> x, Rng& rng);

inline constexpr std::size_t kCalibrationDraws = 20000;
inline constexpr double kCalibrationTolerance = 0.01;

// Bisection on c_max so that the Monte-Carlo event rate P(E <= C) lies
// within one percentage point of the target. `c_max_upper` caps the search.
double calibrate_censoring(const CoxWeibullModel& model, const Eigen::MatrixXd& xs, double target_event_rate,
                           Rng& rng, std::optional<double> c_max_upper = std::nullopt);

// i.i.d. N(0, 1) feature matrix (n x d).
Eigen::MatrixXd gaussian_features(std::size_t n, std::size_t d, Rng& rng);

struct SyntheticRows {
  std::vector<double> event_times;   // E
  std::vector<double> censor_times;  // C
  std::vector<double> times;         // min(E, C)
  std::vector<int> events;           // 1(E <= C)
};

// Row r draws from Rng::substream(seed, r).
SyntheticRows generate_rows(const CoxWeibullModel& model, const Eigen::MatrixXd& xs, std::uint64_t seed);

// Numeric columns x0..x{d-1} plus the generated targets.
SurvivalDataset generate_dataset(const CoxWeibullModel& model, const Eigen::MatrixXd& xs, Rng& rng);

std::vector<ColumnSpec> synthetic_schema(std::size_t d);
// CSV with header x0..x{d-1},time,event.
void write_dataset_csv(std::ostream& os, const SurvivalDataset& ds);

}  // namespace sdpm
