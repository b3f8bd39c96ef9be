#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sdpm/denoiser.hpp"
#include "sdpm/schedule.hpp"
#include "sdpm/target_space.hpp"

namespace sdpm {

// K generated (t, delta) pairs for one subject.
struct GeneratedOutcomes {
  std::vector<Outcome> pairs;
  std::size_t size() const { return pairs.size(); }
};

// tau_{i-1} = (tau_i - beta_i / sqrt(1 - alpha_bar_i) * eps_hat) / sqrt(alpha_i) + sqrt(beta_i) * eps
Vec2 reverse_update(const Vec2& tau_i, const Vec2& eps_hat, const Vec2& eps, std::size_t i,
                    const DiffusionSchedule& sched);

// Per-coordinate bounds on the clean latent implied by a noise prediction.
struct LatentBox {
  Vec2 lo{0.0, 0.0};
  Vec2 hi{0.0, 0.0};
};

// Training range of t_tilde widened by `margin` on both sides, and
// delta_tilde within mixture_mean + 3 mixture standard deviations of zero.
// Transformed mode only.
LatentBox latent_box(const TargetTransform& tf, std::span<const double> train_times, double margin);

// If tau_0_hat = (tau_i - sqrt(1 - alpha_bar_i) * eps_hat) / sqrt(alpha_bar_i)
// leaves the box, returns the noise prediction implied by the clipped
// tau_0_hat; otherwise eps_hat unchanged.
Vec2 clip_prediction(const Vec2& tau_i, const Vec2& eps_hat, std::size_t i, const DiffusionSchedule& sched,
                     const LatentBox& box);

// One reverse step with the network's noise prediction. No noise is added at
// i = 1, so tau_0 is a deterministic function of tau_1.
Vec2 reverse_step(const DenoiserNet& net, const Vec2& tau_i, std::size_t i, std::span<const double> x,
                  const DiffusionSchedule& sched, Rng& rng);

// Runs K reverse trajectories from tau_r ~ N(0, I) and returns the latent
// tau_0 values (2 x K). Trajectory k draws from its own sub-stream of
// `stream_seed`, so the result does not depend on the thread count.
// With a box, every noise prediction passes through clip_prediction.
Eigen::Matrix2Xd generate_latent(const DenoiserNet& net, std::span<const double> x, std::size_t k,
                                 const DiffusionSchedule& sched, std::uint64_t stream_seed, std::size_t threads = 1,
                                 const std::optional<LatentBox>& box = std::nullopt);

GeneratedOutcomes generate(const DenoiserNet& net, std::span<const double> x, std::size_t k,
                           const DiffusionSchedule& sched, const TargetTransform& tf, Rng& rng,
                           const std::optional<LatentBox>& box = std::nullopt);
GeneratedOutcomes generate_seeded(const DenoiserNet& net, std::span<const double> x, std::size_t k,
                                  const DiffusionSchedule& sched, const TargetTransform& tf,
                                  std::uint64_t stream_seed, std::size_t threads = 1,
                                  const std::optional<LatentBox>& box = std::nullopt);

// One GeneratedOutcomes per row of `features`; subject s uses the sub-stream
// mix_seed(seed, s). Parallel over subjects.
std::vector<GeneratedOutcomes> generate_for_subjects(const DenoiserNet& net, const Eigen::MatrixXd& features,
                                                     std::size_t k, const DiffusionSchedule& sched,
                                                     const TargetTransform& tf, std::uint64_t seed,
                                                     std::size_t threads,
                                                     const std::optional<LatentBox>& box = std::nullopt);

struct GenerationDiagnostics {
  double event_rate = 0.0;          // fraction with delta = 1
  double negative_rate = 0.0;       // fraction with t < 0
  double range_exceed_rate = 0.0;   // fraction with t > 2 * t_max
  std::size_t count = 0;
};

GenerationDiagnostics generation_diagnostics(const GeneratedOutcomes& out, double t_max);
GenerationDiagnostics generation_diagnostics(std::span<const GeneratedOutcomes> outs, double t_max);

}  // namespace sdpm
