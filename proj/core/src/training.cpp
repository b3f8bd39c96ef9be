#include "sdpm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sdpm/errors.hpp"

namespace sdpm {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train: Adam moment parameters must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("train: adam_eps must be positive");
  if (validation_repeats < 1) throw ValidationError("train: validation_repeats must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},   {"learning_rate", learning_rate}, {"weight_decay", weight_decay},
          {"epochs", epochs},           {"seed", seed},                   {"beta1", beta1},
          {"beta2", beta2},             {"adam_eps", adam_eps},           {"patience", patience},
          {"validation_repeats", validation_repeats}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.patience = j.at("patience").get<std::size_t>();
  c.validation_repeats = j.at("validation_repeats").get<std::size_t>();
  c.validate();
  return c;
}

namespace {

struct NoisedBatch {
  Eigen::Matrix2Xd tau;
  Eigen::Matrix2Xd eps;
  Eigen::RowVectorXd steps;
};

NoisedBatch noise_batch(const Batch& batch, const DiffusionSchedule& sched, Rng& rng, bool zero_noise) {
  const Eigen::Index n = batch.tau0.cols();
  NoisedBatch nb{Eigen::Matrix2Xd(2, n), Eigen::Matrix2Xd(2, n), Eigen::RowVectorXd(n)};
  const auto r = static_cast<std::int64_t>(sched.steps());
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(1, r));
    Vec2 eps{0.0, 0.0};
    if (!zero_noise) eps = {rng.normal(), rng.normal()};
    const Vec2 tau = forward_noise({batch.tau0(0, b), batch.tau0(1, b)}, i, sched, eps);
    nb.tau(0, b) = tau[0];
    nb.tau(1, b) = tau[1];
    nb.eps(0, b) = eps[0];
    nb.eps(1, b) = eps[1];
    nb.steps(b) = sched.step_value(i);
  }
  return nb;
}

}  // namespace

LossGrad loss_and_grad(const DenoiserNet& net, const Batch& batch, const DiffusionSchedule& sched, Rng& rng,
                       const LossOptions& options) {
  const Eigen::Index n = batch.tau0.cols();
  if (n == 0) throw ValidationError("loss_and_grad: empty batch");
  const NoisedBatch nb = noise_batch(batch, sched, rng, options.zero_noise);

  ForwardCache cache;
  const Eigen::Matrix2Xd pred = net.forward_batch(nb.tau, nb.steps, batch.x, &cache, options.train ? &rng : nullptr);
  const Eigen::Matrix2Xd diff = pred - nb.eps;

  LossGrad out;
  out.loss = diff.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(out.loss)) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (!diff.col(b).allFinite()) {
        throw NumericError("non-finite loss at batch element " + std::to_string(b));
      }
    }
    throw NumericError("non-finite loss");
  }
  out.grad.assign(net.parameter_count(), 0.0);
  const Eigen::Matrix2Xd g_out = (2.0 / static_cast<double>(n)) * diff;
  net.backward(cache, g_out, out.grad);
  return out;
}

double batch_loss(const DenoiserNet& net, const Batch& batch, const DiffusionSchedule& sched, Rng& rng) {
  const Eigen::Index n = batch.tau0.cols();
  if (n == 0) throw ValidationError("batch_loss: empty batch");
  const NoisedBatch nb = noise_batch(batch, sched, rng, false);
  const Eigen::Matrix2Xd pred = net.forward_batch(nb.tau, nb.steps, batch.x, nullptr, nullptr);
  return (pred - nb.eps).squaredNorm() / static_cast<double>(n);
}

AdamW::AdamW(std::size_t n, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), wd_(cfg.weight_decay), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.adam_eps),
      m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * grad[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * grad[k] * grad[k];
    const double update = (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_) + wd_ * params[k];
    params[k] -= lr_ * update;
  }
}

TargetSource make_target_source(const SurvivalDataset& ds, const TargetTransform& tf) {
  TargetSource src;
  src.size = ds.size();
  src.make_batch = [&ds, tf](std::span<const std::size_t> rows, Rng& rng) {
    Batch b{Eigen::Matrix2Xd(2, Eigen::Index(rows.size())),
            Eigen::MatrixXd(ds.features.cols(), Eigen::Index(rows.size()))};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto col = Eigen::Index(k);
      const LatentTarget lt = tf.encode(ds.times[rows[k]], ds.events[rows[k]], rng);
      b.tau0(0, col) = lt.t_tilde;
      b.tau0(1, col) = lt.delta_tilde;
      b.x.col(col) = ds.features.row(Eigen::Index(rows[k])).transpose();
    }
    return b;
  };
  return src;
}

nlohmann::json TrainHistory::to_json() const {
  return {{"train_loss", train_loss},
          {"validation_loss", validation_loss},
          {"best_epoch", best_epoch},
          {"best_validation_loss", best_validation_loss},
          {"initial_validation_loss", initial_validation_loss},
          {"stopped_early", stopped_early},
          {"diverged", diverged},
          {"divergence_message", divergence_message}};
}

namespace {

double validation_loss(const DenoiserNet& net, const TargetSource& src, const DiffusionSchedule& sched,
                       const TrainConfig& cfg) {
  // Same noise every epoch so that epochs are compared on equal footing.
  Rng rng(mix_seed(cfg.seed, 0x5eed'0001ULL));
  std::vector<std::size_t> rows(src.size);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t rep = 0; rep < cfg.validation_repeats; ++rep) {
    for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(rows.size(), start + cfg.batch_size);
      const Batch b = src.make_batch(std::span<const std::size_t>(rows).subspan(start, end - start), rng);
      total += batch_loss(net, b, sched, rng) * static_cast<double>(end - start);
      count += end - start;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

TrainHistory train(DenoiserNet& net, const TargetSource& train_data, const TargetSource& validation_data,
                   const DiffusionSchedule& sched, const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.size == 0) throw ValidationError("train: empty training set");
  // Without a validation set, model selection falls back to the training loss.
  const TargetSource& selection = validation_data.size > 0 ? validation_data : train_data;

  TrainHistory hist;
  Rng rng(mix_seed(cfg.seed, 0x5eed'0000ULL));
  AdamW opt(net.parameter_count(), cfg);
  std::vector<double> best(net.parameters().begin(), net.parameters().end());

  hist.initial_validation_loss = validation_loss(net, selection, sched, cfg);
  hist.best_validation_loss = hist.initial_validation_loss;

  std::vector<std::size_t> order(train_data.size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const Batch b = train_data.make_batch(std::span<const std::size_t>(order).subspan(start, end - start), rng);
        LossGrad lg = loss_and_grad(net, b, sched, rng);
        opt.step(net.parameters(), lg.grad);
        epoch_loss += lg.loss * static_cast<double>(end - start);
      }
    } catch (const NumericError& e) {
      hist.diverged = true;
      hist.divergence_message = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    hist.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    const double vl = validation_loss(net, selection, sched, cfg);
    hist.validation_loss.push_back(vl);
    if (!std::isfinite(vl)) {
      hist.diverged = true;
      hist.divergence_message = "epoch " + std::to_string(epoch) + ": non-finite validation loss";
      break;
    }
    if (vl < hist.best_validation_loss) {
      std::copy(net.parameters().begin(), net.parameters().end(), best.begin());
      hist.best_validation_loss = vl;
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  std::copy(best.begin(), best.end(), net.parameters().begin());
  return hist;
}

TrainHistory train(DenoiserNet& net, const SurvivalDataset& train_data, const SurvivalDataset& validation_data,
                   const TargetTransform& tf, const DiffusionSchedule& sched, const TrainConfig& cfg) {
  return train(net, make_target_source(train_data, tf), make_target_source(validation_data, tf), sched, cfg);
}

}  // namespace sdpm
