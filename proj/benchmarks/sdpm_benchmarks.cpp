#include <random>

#include <benchmark/benchmark.h>

#include "sdpm/denoiser.hpp"
#include "sdpm/estimators.hpp"
#include "sdpm/metrics.hpp"
#include "sdpm/sampler.hpp"
#include "sdpm/training.hpp"

using namespace sdpm;

namespace {

FeatureLayout numeric_layout(std::size_t d) {
  FeatureLayout layout;
  for (std::size_t k = 0; k < d; ++k) layout.blocks.push_back({"x" + std::to_string(k), ColumnKind::Numeric, k, 1});
  return layout;
}

NetConfig bench_config(NormMode norm) {
  NetConfig cfg;
  cfg.hidden_layers = 3;
  cfg.hidden_dim = 128;
  cfg.norm = norm;
  return cfg;
}

}  // namespace

static void BM_Predict(benchmark::State& state) {
  const DenoiserNet net(bench_config(static_cast<NormMode>(state.range(1))), numeric_layout(6), 1);
  const auto k = static_cast<Eigen::Index>(state.range(0));
  const Eigen::Matrix2Xd tau = Eigen::Matrix2Xd::Random(2, k);
  const std::vector<double> x(6, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(tau, 5.0, x));
  state.SetItemsProcessed(state.iterations() * k);
}
BENCHMARK(BM_Predict)->ArgsProduct({{1, 128, 2048}, {0, 2}});

static void BM_LossAndGrad(benchmark::State& state) {
  const DenoiserNet net(bench_config(NormMode::None), numeric_layout(6), 1);
  const auto b = static_cast<Eigen::Index>(state.range(0));
  Batch batch{Eigen::Matrix2Xd::Random(2, b), Eigen::MatrixXd::Random(6, b)};
  const auto sched = cosine_schedule(20);
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(net, batch, sched, rng));
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_LossAndGrad)->Arg(64)->Arg(128);

static void BM_Generate(benchmark::State& state) {
  const DenoiserNet net(bench_config(NormMode::None), numeric_layout(6), 1);
  const auto sched = cosine_schedule(20);
  const TargetTransform tf{4.0, 1.0};
  const std::vector<double> x(6, 0.1);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_seeded(net, x, k, sched, tf, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Generate)->Arg(128)->Arg(2048);

static void BM_KaplanMeier(benchmark::State& state) {
  std::mt19937_64 gen(4);
  std::exponential_distribution<double> ed(0.01);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> t(static_cast<std::size_t>(state.range(0)));
  std::vector<int> e(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = ed(gen) + 1e-3;
    e[i] = coin(gen);
  }
  for (auto _ : state) benchmark::DoNotOptimize(kaplan_meier(t, e));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KaplanMeier)->Arg(1000)->Arg(100000);

static void BM_Metrics(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::exponential_distribution<double> ed(0.01);
  std::bernoulli_distribution coin(0.5);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> t(n);
  std::vector<int> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = ed(gen) + 1e-3;
    e[i] = coin(gen);
  }
  const auto grid = TimeGrid::from_event_times(t, e);
  std::vector<StepSurvivalCurve> curves;
  for (std::size_t i = 0; i < n; ++i) {
    GeneratedOutcomes out;
    for (int k = 0; k < 64; ++k) out.pairs.push_back({ed(gen) + 1e-3, coin(gen) ? 1 : 0});
    curves.push_back(survival_from_samples(out, grid));
  }
  const auto ev = make_evaluation_input(curves, t, e, censoring_km(t, e));
  const auto km = kaplan_meier(t, e);
  for (auto _ : state) {
    benchmark::DoNotOptimize(c_index(ev));
    benchmark::DoNotOptimize(integrated_auc(ev, km));
    benchmark::DoNotOptimize(ibs(ev));
  }
}
BENCHMARK(BM_Metrics)->Arg(100)->Arg(500);

BENCHMARK_MAIN();
