#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "sdpm/dataset.hpp"
#include "sdpm/denoiser.hpp"
#include "sdpm/schedule.hpp"
#include "sdpm/target_space.hpp"

namespace sdpm {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t patience = 100;
  // Noise draws per validation example when estimating validation loss.
  std::size_t validation_repeats = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Clean targets tau0 (2 x B) and their features (d x B).
struct Batch {
  Eigen::Matrix2Xd tau0;
  Eigen::MatrixXd x;
};

struct LossOptions {
  // Test hook: forward noise eps is forced to zero.
  bool zero_noise = false;
  // Dropout active (training) or disabled (evaluation).
  bool train = true;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean over the batch of ||eps - eps_theta(tau_i, i, x)||^2 with a uniform
// step i per element, plus the gradient w.r.t. every network parameter.
LossGrad loss_and_grad(const DenoiserNet& net, const Batch& batch, const DiffusionSchedule& sched, Rng& rng,
                       const LossOptions& options = {});
// Loss only (no gradient, dropout off).
double batch_loss(const DenoiserNet& net, const Batch& batch, const DiffusionSchedule& sched, Rng& rng);

// Decoupled-weight-decay Adam.
class AdamW {
 public:
  AdamW(std::size_t n, const TrainConfig& cfg);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// Produces a batch for the given row indices. Transformed targets resample
// delta_tilde on every call, so each mini-batch sees fresh censoring latents.
struct TargetSource {
  std::size_t size = 0;
  std::function<Batch(std::span<const std::size_t> rows, Rng& rng)> make_batch;
};

TargetSource make_target_source(const SurvivalDataset& ds, const TargetTransform& tf);

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_validation_loss = 0.0;
  double initial_validation_loss = 0.0;
  bool stopped_early = false;
  bool diverged = false;
  std::string divergence_message;

  nlohmann::json to_json() const;
};

// Trains in place and restores the parameters with the best validation loss.
// Deterministic given cfg.seed.
TrainHistory train(DenoiserNet& net, const TargetSource& train_data, const TargetSource& validation_data,
                   const DiffusionSchedule& sched, const TrainConfig& cfg);
TrainHistory train(DenoiserNet& net, const SurvivalDataset& train_data, const SurvivalDataset& validation_data,
                   const TargetTransform& tf, const DiffusionSchedule& sched, const TrainConfig& cfg);

}  // namespace sdpm
