#include "sdpm/target_space.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "sdpm/errors.hpp"

namespace sdpm {

const char* to_string(TargetMode mode) {
  return mode == TargetMode::Transformed ? "transformed" : "raw_ablation";
}

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "transformed") return TargetMode::Transformed;
  if (s == "raw_ablation") return TargetMode::RawAblation;
  throw ValidationError("unknown target mode '" + s + "'");
}

TargetTransform fit_target_transform(std::span<const double> times, TargetMode mode) {
  if (times.size() < 2) throw ValidationError("fit: need at least two times");
  double sum = 0.0;
  for (double t : times) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("fit: times must be positive and finite");
    sum += std::log(t);
  }
  const double n = static_cast<double>(times.size());
  const double mu = sum / n;
  double ss = 0.0;
  for (double t : times) {
    const double d = std::log(t) - mu;
    ss += d * d;
  }
  const double sigma = std::sqrt(ss / n);
  if (!(sigma > 0.0)) throw ValidationError("fit: all times are equal, log-time std is zero");

  TargetTransform tf;
  tf.mu = mu;
  tf.sigma = sigma;
  tf.mode = mode;
  return tf;
}

double TargetTransform::encode_time(double t) const {
  if (!(t > 0.0)) throw DomainError("encode: time must be positive");
  if (mode == TargetMode::RawAblation) return t;
  return (std::log(t) - mu) / sigma;
}

LatentTarget TargetTransform::encode(double t, int delta, Rng& rng) const {
  LatentTarget lt;
  lt.t_tilde = encode_time(t);
  const double sign = delta != 0 ? 1.0 : -1.0;
  if (mode == TargetMode::RawAblation) {
    lt.delta_tilde = sign;
  } else {
    lt.delta_tilde = sign * mixture_mean + std::sqrt(mixture_var) * rng.normal();
  }
  return lt;
}

Outcome TargetTransform::decode(const LatentTarget& lt) const {
  if (!std::isfinite(lt.t_tilde) || !std::isfinite(lt.delta_tilde)) {
    throw NumericError("decode: non-finite latent target");
  }
  Outcome o;
  o.event = lt.delta_tilde > 0.0 ? 1 : 0;
  if (mode == TargetMode::RawAblation) {
    o.time = lt.t_tilde;
  } else {
    // Clamp the exponent so the decoded time stays finite and strictly positive.
    static const double lo = std::log(std::numeric_limits<double>::min());
    static const double hi = std::log(std::numeric_limits<double>::max());
    double z = sigma * lt.t_tilde + mu;
    z = std::min(std::max(z, lo), hi);
    o.time = std::exp(z);
  }
  return o;
}

nlohmann::json TargetTransform::to_json() const {
  return {{"mu", mu},
          {"sigma", sigma},
          {"mixture_mean", mixture_mean},
          {"mixture_var", mixture_var},
          {"mode", to_string(mode)}};
}

TargetTransform TargetTransform::from_json(const nlohmann::json& j) {
  TargetTransform tf;
  tf.mu = j.at("mu").get<double>();
  tf.sigma = j.at("sigma").get<double>();
  tf.mixture_mean = j.at("mixture_mean").get<double>();
  tf.mixture_var = j.at("mixture_var").get<double>();
  tf.mode = target_mode_from_string(j.at("mode").get<std::string>());
  if (!(tf.sigma > 0.0)) throw ValidationError("target transform: sigma must be positive");
  return tf;
}

}  // namespace sdpm
