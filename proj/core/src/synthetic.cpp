#include "sdpm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "sdpm/csv.hpp"
#include "sdpm/errors.hpp"

namespace sdpm {

void CoxWeibullModel::validate(bool require_c_max) const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("cox-weibull: lambda must be positive");
  if (!(nu > 0.0) || !std::isfinite(nu)) throw DomainError("cox-weibull: nu must be positive");
  if (require_c_max && (!(c_max > 0.0) || !std::isfinite(c_max))) {
    throw DomainError("cox-weibull: c_max must be positive");
  }
}

double CoxWeibullModel::linear_predictor(std::span<const double> x) const {
  if (x.size() != b.size()) throw ValidationError("cox-weibull: feature dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) s += b[k] * x[k];
  return s;
}

nlohmann::json CoxWeibullModel::to_json() const {
  return {{"b", b}, {"lambda", lambda}, {"nu", nu}, {"c_max", c_max}};
}

CoxWeibullModel CoxWeibullModel::from_json(const nlohmann::json& j) {
  CoxWeibullModel m;
  m.b = j.at("b").get<std::vector<double>>();
  m.lambda = j.at("lambda").get<double>();
  m.nu = j.at("nu").get<double>();
  m.c_max = j.at("c_max").get<double>();
  m.validate(false);
  return m;
}

CoxWeibullModel random_cox_weibull(std::size_t d, Rng& rng, double lambda, double nu) {
  CoxWeibullModel m;
  m.lambda = lambda;
  m.nu = nu;
  m.b.resize(d);
  for (double& v : m.b) v = -1.0 + 2.0 * rng.uniform();
  m.validate(false);
  return m;
}

double analytic_survival(const CoxWeibullModel& model, std::span<const double> x, double t) {
  if (t < 0.0) throw DomainError("analytic_survival: t must be non-negative");
  return std::exp(-model.lambda * std::pow(t, model.nu) * std::exp(model.linear_predictor(x)));
}

double event_time_from_uniform(const CoxWeibullModel& model, std::span<const double> x, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("event_time_from_uniform: u must lie in (0, 1)");
  return std::pow(-std::log(u) / (model.lambda * std::exp(model.linear_predictor(x))), 1.0 / model.nu);
}

double sample_event_time(const CoxWeibullModel& model, std::span<const double> x, Rng& rng) {
  return event_time_from_uniform(model, x, rng.uniform_open());
}

namespace {

std::span<const double> row_span(const Eigen::MatrixXd& xs, Eigen::Index r, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(xs.cols()));
  for (Eigen::Index c = 0; c < xs.cols(); ++c) buf[static_cast<std::size_t>(c)] = xs(r, c);
  return buf;
}

}  // namespace

double calibrate_censoring(const CoxWeibullModel& model, const Eigen::MatrixXd& xs, double target_event_rate,
                           Rng& rng, std::optional<double> c_max_upper) {
  model.validate(false);
  if (!(target_event_rate > 0.0 && target_event_rate < 1.0)) {
    throw DomainError("calibrate_censoring: target event rate must lie in (0, 1)");
  }
  if (xs.rows() == 0) throw ValidationError("calibrate_censoring: empty feature matrix");
  if (static_cast<std::size_t>(xs.cols()) != model.b.size()) {
    throw ValidationError("calibrate_censoring: feature dimension mismatch");
  }

  // Common random numbers: the event rate is monotone in c_max for a fixed draw set.
  std::vector<double> e(kCalibrationDraws), v(kCalibrationDraws);
  std::vector<double> buf;
  for (std::size_t k = 0; k < kCalibrationDraws; ++k) {
    const auto r = static_cast<Eigen::Index>(rng.uniform_int(0, xs.rows() - 1));
    e[k] = sample_event_time(model, row_span(xs, r, buf), rng);
    v[k] = rng.uniform_open();
  }
  const auto rate = [&](double c) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < kCalibrationDraws; ++k) hits += e[k] <= v[k] * c;
    return static_cast<double>(hits) / static_cast<double>(kCalibrationDraws);
  };
  const auto close = [&](double r) { return std::abs(r - target_event_rate) <= kCalibrationTolerance; };

  double lo = 0.0;
  double hi = 0.0;
  if (c_max_upper) {
    if (!(*c_max_upper > 0.0)) throw DomainError("calibrate_censoring: upper bound must be positive");
    hi = *c_max_upper;
    if (rate(hi) < target_event_rate - kCalibrationTolerance) {
      throw DomainError("calibrate_censoring: target event rate unattainable below the c_max bound");
    }
  } else {
    std::vector<double> sorted(e);
    std::sort(sorted.begin(), sorted.end());
    hi = sorted[sorted.size() / 2];
    int doublings = 0;
    while (rate(hi) < target_event_rate - kCalibrationTolerance) {
      hi *= 2.0;
      if (++doublings > 200) throw DomainError("calibrate_censoring: target event rate unattainable");
    }
  }
  if (close(rate(hi))) return hi;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate(mid);
    if (close(r)) return mid;
    if (r < target_event_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw DomainError("calibrate_censoring: bisection did not reach the tolerance");
}

Eigen::MatrixXd gaussian_features(std::size_t n, std::size_t d, Rng& rng) {
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < xs.rows(); ++r) {
    for (Eigen::Index c = 0; c < xs.cols(); ++c) xs(r, c) = rng.normal();
  }
  return xs;
}

SyntheticRows generate_rows(const CoxWeibullModel& model, const Eigen::MatrixXd& xs, std::uint64_t seed) {
  model.validate(true);
  if (static_cast<std::size_t>(xs.cols()) != model.b.size()) {
    throw ValidationError("generate_rows: feature dimension mismatch");
  }
  const auto n = static_cast<std::size_t>(xs.rows());
  SyntheticRows out;
  out.event_times.resize(n);
  out.censor_times.resize(n);
  out.times.resize(n);
  out.events.resize(n);
  std::vector<double> buf;
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng = Rng::substream(seed, r);
    const double e = sample_event_time(model, row_span(xs, static_cast<Eigen::Index>(r), buf), rng);
    const double c = model.c_max * rng.uniform_open();
    out.event_times[r] = e;
    out.censor_times[r] = c;
    out.events[r] = e <= c ? 1 : 0;
    out.times[r] = out.events[r] ? e : c;
  }
  return out;
}

std::vector<ColumnSpec> synthetic_schema(std::size_t d) {
  std::vector<ColumnSpec> schema;
  for (std::size_t k = 0; k < d; ++k) schema.push_back({"x" + std::to_string(k), ColumnKind::Numeric, {}});
  schema.push_back({"time", ColumnKind::Time, {}});
  schema.push_back({"event", ColumnKind::Event, {}});
  return schema;
}

SurvivalDataset generate_dataset(const CoxWeibullModel& model, const Eigen::MatrixXd& xs, Rng& rng) {
  auto rows = generate_rows(model, xs, rng.next_u64());
  SurvivalDataset ds;
  ds.features = xs;
  ds.times = std::move(rows.times);
  ds.events = std::move(rows.events);
  const auto d = static_cast<std::size_t>(xs.cols());
  ds.specs = synthetic_schema(d);
  ds.numeric_stats.assign(d, NumericStats{0.0, 1.0, false});
  for (std::size_t k = 0; k < d; ++k) ds.layout.blocks.push_back({"x" + std::to_string(k), ColumnKind::Numeric, k, 1});
  return ds;
}

void write_dataset_csv(std::ostream& os, const SurvivalDataset& ds) {
  const auto d = static_cast<std::size_t>(ds.features.cols());
  for (std::size_t k = 0; k < d; ++k) os << 'x' << k << ',';
  os << "time,event\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      os << csv::format_double(ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k))) << ',';
    }
    os << csv::format_double(ds.times[r]) << ',' << ds.events[r] << '\n';
  }
}

}  // namespace sdpm
