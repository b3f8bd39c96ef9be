#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "sdpm/errors.hpp"
#include "sdpm/training.hpp"

using namespace sdpm;

namespace {

TargetSource constant_source(std::size_t n, std::size_t d) {
  TargetSource src;
  src.size = n;
  src.make_batch = [d](std::span<const std::size_t> rows, Rng&) {
    Batch b{Eigen::Matrix2Xd::Zero(2, Eigen::Index(rows.size())), Eigen::MatrixXd::Zero(Eigen::Index(d), Eigen::Index(rows.size()))};
    return b;
  };
  return src;
}

TargetSource random_source(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto batch = gradcheck::random_batch(n, rng);
  TargetSource src;
  src.size = n;
  src.make_batch = [batch](std::span<const std::size_t> rows, Rng&) {
    Batch b{Eigen::Matrix2Xd(2, Eigen::Index(rows.size())), Eigen::MatrixXd(5, Eigen::Index(rows.size()))};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      b.tau0.col(Eigen::Index(k)) = batch.tau0.col(Eigen::Index(rows[k]));
      b.x.col(Eigen::Index(k)) = batch.x.col(Eigen::Index(rows[k]));
    }
    return b;
  };
  return src;
}

}  // namespace

TEST(Loss, ZeroNetOnZeroNoiseHasZeroLossAndGradient) {
  DenoiserNet net(gradcheck::small_config(NormMode::Layer, true), gradcheck::small_layout(), 1);
  for (double& p : net.parameters()) p = 0.0;
  Rng rng(1);
  const auto batch = gradcheck::random_batch(10, rng);
  LossOptions opts;
  opts.zero_noise = true;
  const auto res = loss_and_grad(net, batch, cosine_schedule(10), rng, opts);
  EXPECT_EQ(res.loss, 0.0);
  for (double g : res.grad) EXPECT_EQ(g, 0.0);
}

TEST(Loss, ZeroNetExpectedLossIsTwo) {
  DenoiserNet net(gradcheck::small_config(NormMode::None, false), gradcheck::small_layout(), 1);
  for (double& p : net.parameters()) p = 0.0;
  Rng rng(2);
  const auto batch = gradcheck::random_batch(10000, rng);
  EXPECT_NEAR(batch_loss(net, batch, cosine_schedule(20), rng), 2.0, 0.1);
}

TEST(Loss, EmptyBatchRejected) {
  DenoiserNet net(gradcheck::small_config(NormMode::None, false), gradcheck::small_layout(), 1);
  Rng rng(3);
  Batch empty{Eigen::Matrix2Xd(2, 0), Eigen::MatrixXd(5, 0)};
  EXPECT_THROW(loss_and_grad(net, empty, cosine_schedule(10), rng), ValidationError);
}

TEST(Loss, NonFiniteLossNamesBatchElement) {
  DenoiserNet net(gradcheck::small_config(NormMode::None, false), gradcheck::small_layout(), 1);
  Rng rng(4);
  auto batch = gradcheck::random_batch(4, rng);
  batch.tau0(0, 2) = std::nan("");
  try {
    loss_and_grad(net, batch, cosine_schedule(10), rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  DenoiserNet net(gradcheck::small_config(NormMode::AdaLNZero, false), gradcheck::small_layout(), 1);
  const std::vector<double> before(net.parameters().begin(), net.parameters().end());
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  const auto src = random_source(16, 1);
  train(net, src, src, cosine_schedule(10), cfg);
  const std::vector<double> after(net.parameters().begin(), net.parameters().end());
  EXPECT_EQ(before, after);
}

TEST(Train, DeterministicGivenSeed) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  cfg.seed = 9;
  const auto src = random_source(40, 2);
  DenoiserNet a(gradcheck::small_config(NormMode::Layer, false), gradcheck::small_layout(), 1);
  DenoiserNet b(gradcheck::small_config(NormMode::Layer, false), gradcheck::small_layout(), 1);
  const auto ha = train(a, src, src, cosine_schedule(10), cfg);
  const auto hb = train(b, src, src, cosine_schedule(10), cfg);
  EXPECT_EQ(ha.train_loss, hb.train_loss);
  EXPECT_EQ(ha.validation_loss, hb.validation_loss);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
}

TEST(Train, UnconditionalToyTaskLearns) {
  NetConfig nc;
  nc.hidden_layers = 2;
  nc.hidden_dim = 32;
  DenoiserNet net(nc, FeatureLayout{}, 3);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  cfg.patience = 1000;
  const auto src = constant_source(64, 0);
  const auto hist = train(net, src, src, cosine_schedule(10), cfg);
  ASSERT_EQ(hist.train_loss.size(), 200u);
  double tail = 0.0;
  for (std::size_t e = 180; e < 200; ++e) tail += hist.train_loss[e];
  EXPECT_LT(tail / 20.0, 1.0);
  EXPECT_LE(hist.best_validation_loss, hist.initial_validation_loss);
}

TEST(Train, EarlyStoppingRestoresBest) {
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.patience = 3;
  cfg.batch_size = 32;
  cfg.learning_rate = 5e-3;
  const auto src = random_source(32, 5);
  DenoiserNet net(gradcheck::small_config(NormMode::None, false), gradcheck::small_layout(), 1);
  const auto hist = train(net, src, src, cosine_schedule(10), cfg);
  if (hist.best_epoch > 0) {
    EXPECT_EQ(hist.validation_loss[hist.best_epoch - 1], hist.best_validation_loss);
  }
  EXPECT_LE(hist.best_validation_loss, hist.initial_validation_loss);
  if (hist.stopped_early) {
    EXPECT_EQ(hist.train_loss.size(), hist.best_epoch + cfg.patience);
  }
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.seed = 77;
  const auto back = TrainConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(2, cfg);
  std::vector<double> p{1.0, -1.0}, g{0.5, -2.0};
  opt.step(p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -0.9, 1e-6);
}
