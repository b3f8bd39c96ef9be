#include "sdpm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sdpm/errors.hpp"
#include "sdpm/parallel.hpp"

namespace sdpm {

Vec2 reverse_update(const Vec2& tau_i, const Vec2& eps_hat, const Vec2& eps, std::size_t i,
                    const DiffusionSchedule& sched) {
  if (i < 1 || i > sched.steps()) throw ValidationError("reverse_step: step index out of range");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(i));
  const double coef = sched.beta(i) / std::sqrt(1.0 - sched.alpha_bar(i));
  const double sigma = std::sqrt(sched.beta(i));
  Vec2 out;
  for (std::size_t c = 0; c < 2; ++c) out[c] = inv_sqrt_alpha * (tau_i[c] - coef * eps_hat[c]) + sigma * eps[c];
  if (!std::isfinite(out[0]) || !std::isfinite(out[1])) {
    throw NumericError("reverse step " + std::to_string(i) + ": non-finite latent");
  }
  return out;
}

LatentBox latent_box(const TargetTransform& tf, std::span<const double> train_times, double margin) {
  if (tf.mode != TargetMode::Transformed) throw ValidationError("latent_box: transformed mode only");
  if (train_times.empty()) throw ValidationError("latent_box: no training times");
  if (!(margin >= 0.0)) throw ValidationError("latent_box: margin must be non-negative");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double t : train_times) {
    const double v = tf.encode_time(t);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double d = tf.mixture_mean + 3.0 * std::sqrt(tf.mixture_var);
  return {{lo - margin, -d}, {hi + margin, d}};
}

Vec2 clip_prediction(const Vec2& tau_i, const Vec2& eps_hat, std::size_t i, const DiffusionSchedule& sched,
                     const LatentBox& box) {
  const double a = std::sqrt(sched.alpha_bar(i));
  const double b = std::sqrt(1.0 - sched.alpha_bar(i));
  Vec2 out = eps_hat;
  for (std::size_t c = 0; c < 2; ++c) {
    const double x0 = (tau_i[c] - b * eps_hat[c]) / a;
    if (x0 < box.lo[c] || x0 > box.hi[c]) out[c] = (tau_i[c] - a * std::clamp(x0, box.lo[c], box.hi[c])) / b;
  }
  return out;
}

Vec2 reverse_step(const DenoiserNet& net, const Vec2& tau_i, std::size_t i, std::span<const double> x,
                  const DiffusionSchedule& sched, Rng& rng) {
  if (i < 1 || i > sched.steps()) throw ValidationError("reverse_step: step index out of range");
  const Vec2 eps_hat = net.forward(tau_i, sched.step_value(i), x);
  Vec2 eps{0.0, 0.0};
  if (i > 1) eps = {rng.normal(), rng.normal()};
  return reverse_update(tau_i, eps_hat, eps, i, sched);
}

namespace {

constexpr std::size_t kChunk = 512;

void run_chunk(const DenoiserNet& net, std::span<const double> x, const DiffusionSchedule& sched,
               std::uint64_t stream_seed, std::size_t first, std::size_t count, const std::optional<LatentBox>& box,
               Eigen::Matrix2Xd& out) {
  std::vector<Rng> rngs;
  rngs.reserve(count);
  Eigen::Matrix2Xd tau(2, Eigen::Index(count));
  for (std::size_t k = 0; k < count; ++k) {
    rngs.push_back(Rng::substream(stream_seed, first + k));
    tau(0, Eigen::Index(k)) = rngs.back().normal();
    tau(1, Eigen::Index(k)) = rngs.back().normal();
  }
  for (std::size_t i = sched.steps(); i >= 1; --i) {
    Eigen::Matrix2Xd eps_hat = net.predict(tau, sched.step_value(i), x);
    if (box) {
      for (Eigen::Index k = 0; k < eps_hat.cols(); ++k) {
        const Vec2 e = clip_prediction({tau(0, k), tau(1, k)}, {eps_hat(0, k), eps_hat(1, k)}, i, sched, *box);
        eps_hat(0, k) = e[0];
        eps_hat(1, k) = e[1];
      }
    }
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(i));
    const double coef = sched.beta(i) / std::sqrt(1.0 - sched.alpha_bar(i));
    tau = inv_sqrt_alpha * (tau - coef * eps_hat);
    if (i > 1) {
      const double sigma = std::sqrt(sched.beta(i));
      for (std::size_t k = 0; k < count; ++k) {
        tau(0, Eigen::Index(k)) += sigma * rngs[k].normal();
        tau(1, Eigen::Index(k)) += sigma * rngs[k].normal();
      }
    }
    if (!tau.allFinite()) throw NumericError("reverse step " + std::to_string(i) + ": non-finite latent");
  }
  out.middleCols(Eigen::Index(first), Eigen::Index(count)) = tau;
}

}  // namespace

Eigen::Matrix2Xd generate_latent(const DenoiserNet& net, std::span<const double> x, std::size_t k,
                                 const DiffusionSchedule& sched, std::uint64_t stream_seed, std::size_t threads,
                                 const std::optional<LatentBox>& box) {
  if (k < 1) throw ValidationError("generate: K must be >= 1");
  if (x.size() != net.input_dim()) throw ValidationError("generate: feature dimension mismatch");
  Eigen::Matrix2Xd out(2, Eigen::Index(k));
  const std::size_t chunks = (k + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t first = c * kChunk;
    run_chunk(net, x, sched, stream_seed, first, std::min(kChunk, k - first), box, out);
  });
  return out;
}

GeneratedOutcomes generate_seeded(const DenoiserNet& net, std::span<const double> x, std::size_t k,
                                  const DiffusionSchedule& sched, const TargetTransform& tf,
                                  std::uint64_t stream_seed, std::size_t threads,
                                  const std::optional<LatentBox>& box) {
  const Eigen::Matrix2Xd latent = generate_latent(net, x, k, sched, stream_seed, threads, box);
  GeneratedOutcomes out;
  out.pairs.reserve(k);
  for (Eigen::Index c = 0; c < latent.cols(); ++c) out.pairs.push_back(tf.decode({latent(0, c), latent(1, c)}));
  return out;
}

GeneratedOutcomes generate(const DenoiserNet& net, std::span<const double> x, std::size_t k,
                           const DiffusionSchedule& sched, const TargetTransform& tf, Rng& rng,
                           const std::optional<LatentBox>& box) {
  return generate_seeded(net, x, k, sched, tf, rng.next_u64(), worker_threads(), box);
}

std::vector<GeneratedOutcomes> generate_for_subjects(const DenoiserNet& net, const Eigen::MatrixXd& features,
                                                     std::size_t k, const DiffusionSchedule& sched,
                                                     const TargetTransform& tf, std::uint64_t seed,
                                                     std::size_t threads, const std::optional<LatentBox>& box) {
  const auto n = static_cast<std::size_t>(features.rows());
  std::vector<GeneratedOutcomes> out(n);
  parallel_for(n, threads, [&](std::size_t s) {
    const Eigen::VectorXd x = features.row(Eigen::Index(s)).transpose();
    out[s] = generate_seeded(net, std::span<const double>(x.data(), std::size_t(x.size())), k, sched, tf,
                             mix_seed(seed, s), 1, box);
  });
  return out;
}

GenerationDiagnostics generation_diagnostics(const GeneratedOutcomes& out, double t_max) {
  return generation_diagnostics(std::span<const GeneratedOutcomes>(&out, 1), t_max);
}

GenerationDiagnostics generation_diagnostics(std::span<const GeneratedOutcomes> outs, double t_max) {
  if (!(t_max > 0.0)) throw ValidationError("generation_diagnostics: t_max must be positive");
  GenerationDiagnostics d;
  std::size_t events = 0, negative = 0, exceed = 0;
  for (const auto& o : outs) {
    for (const auto& p : o.pairs) {
      events += p.event == 1;
      negative += p.time < 0.0;
      exceed += p.time > 2.0 * t_max;
      ++d.count;
    }
  }
  if (d.count > 0) {
    const double n = static_cast<double>(d.count);
    d.event_rate = static_cast<double>(events) / n;
    d.negative_rate = static_cast<double>(negative) / n;
    d.range_exceed_rate = static_cast<double>(exceed) / n;
  }
  return d;
}

}  // namespace sdpm
