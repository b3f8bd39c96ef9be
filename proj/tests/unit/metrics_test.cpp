#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "sdpm/errors.hpp"
#include "sdpm/metrics.hpp"

using namespace sdpm;

namespace {

StepSurvivalCurve flat(double v) { return StepSurvivalCurve(TimeGrid({1.0}), {v, v}); }

EvaluationInput flat_input(const std::vector<double>& values, std::vector<double> times, std::vector<int> events,
                           StepSurvivalCurve censoring = {}) {
  std::vector<StepSurvivalCurve> curves;
  for (double v : values) curves.push_back(flat(v));
  return make_evaluation_input(std::move(curves), std::move(times), std::move(events), std::move(censoring));
}

EvaluationInput with_scores(std::vector<double> times, std::vector<int> events, std::vector<double> scores) {
  const std::vector<double> ones(times.size(), 1.0);
  auto ev = flat_input(ones, std::move(times), std::move(events));
  ev.risk_scores = std::move(scores);
  return ev;
}

}  // namespace

TEST(CIndex, Examples) {
  EXPECT_EQ(c_index(with_scores({1, 2, 3}, {1, 1, 1}, {0.5, 1.0, 2.0})), 1.0);
  EXPECT_EQ(c_index(with_scores({1, 2, 3}, {1, 1, 1}, {2.0, 1.0, 0.5})), 0.0);
  EXPECT_EQ(c_index(with_scores({1, 2, 3}, {1, 1, 1}, {1.0, 1.0, 1.0})), 0.5);
  EXPECT_THROW(c_index(with_scores({1, 2}, {0, 0}, {1.0, 2.0})), ValidationError);
}

TEST(CIndex, MixedCensoringMatchesDoubleLoop) {
  const std::vector<double> t{2, 5, 3, 3, 8};
  const std::vector<int> e{1, 0, 1, 0, 1};
  const std::vector<double> s{0.3, 0.9, 0.1, 0.4, 0.9};
  EXPECT_NEAR(c_index(with_scores(t, e, s)), oracle::c_index(t, e, s), 1e-15);
}

TEST(CIndex, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.6);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> t, s, s_exp, s_aff;
    std::vector<int> e;
    for (int i = 0; i < 9; ++i) {
      t.push_back(std::round(std::abs(nd(gen)) * 4.0) + 1.0);
      e.push_back(coin(gen) ? 1 : 0);
      s.push_back(std::round(nd(gen) * 3.0) / 3.0);
      s_exp.push_back(std::exp(s.back()));
      s_aff.push_back(3.0 * s.back() + 7.0);
    }
    e[0] = 1;
    t[0] = 0.5;
    const double base = c_index(with_scores(t, e, s));
    EXPECT_EQ(c_index(with_scores(t, e, s_exp)), base);
    EXPECT_EQ(c_index(with_scores(t, e, s_aff)), base);
  }
}

TEST(TdAuc, Examples) {
  const auto ev = make_evaluation_input({StepSurvivalCurve(TimeGrid({1.0}), {1.0, 0.1}),
                                         StepSurvivalCurve(TimeGrid({1.0}), {1.0, 0.9})},
                                        {1.0, 3.0}, {1, 0}, {});
  EXPECT_EQ(td_auc(ev, 2.0).value(), 1.0);
  EXPECT_FALSE(td_auc(ev, 0.5).has_value());
  EXPECT_FALSE(td_auc(ev, 3.0).has_value());
  const auto same = flat_input({0.4, 0.4, 0.4}, {1, 2, 3}, {1, 1, 0});
  EXPECT_EQ(td_auc(same, 1.5).value(), 0.5);
}

TEST(TdAuc, SixSubjectHandCase) {
  const TimeGrid grid({1, 2, 3});
  std::vector<StepSurvivalCurve> curves{
      StepSurvivalCurve(grid, {1, 0.5, 0.3, 0.1}), StepSurvivalCurve(grid, {1, 0.9, 0.8, 0.7}),
      StepSurvivalCurve(grid, {1, 0.6, 0.6, 0.2}), StepSurvivalCurve(grid, {1, 0.8, 0.7, 0.5}),
      StepSurvivalCurve(grid, {1, 0.7, 0.4, 0.3}), StepSurvivalCurve(grid, {1, 0.95, 0.9, 0.85})};
  const auto ev = make_evaluation_input(curves, {1, 4, 2, 3, 2, 5}, {1, 0, 1, 1, 0, 1}, {});
  for (double t : {1.0, 2.0, 2.5, 3.0}) {
    const auto a = td_auc(ev, t), b = oracle::td_auc(ev, t);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_NEAR(*a, *b, 1e-15);
    }
  }
  // t = 2: cases {0, 2}, controls {1, 3, 5}; all six pairs concordant.
  EXPECT_EQ(td_auc(ev, 2.0).value(), 1.0);
}

TEST(TdAuc, ComplementSumsToOne) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ud;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> v, w, t;
    std::vector<int> e;
    for (int i = 0; i < 8; ++i) {
      v.push_back(ud(gen));
      w.push_back(1.0 - v.back());
      t.push_back(i + 1.0);
      e.push_back(i % 2 == 0 ? 1 : 0);
    }
    const auto a = td_auc(flat_input(v, t, e), 4.5), b = td_auc(flat_input(w, t, e), 4.5);
    EXPECT_NEAR(*a + *b, 1.0, 1e-15);
  }
}

TEST(IntegratedAuc, ConstantAndSingleTime) {
  const TimeGrid grid({1, 2, 3});
  std::vector<StepSurvivalCurve> curves{StepSurvivalCurve(grid, {1, 0.2, 0.1, 0.0}),
                                        StepSurvivalCurve(grid, {1, 0.5, 0.3, 0.2}),
                                        StepSurvivalCurve(grid, {1, 0.9, 0.8, 0.7})};
  const std::vector<double> t{1, 2, 3};
  const std::vector<int> e{1, 1, 0};
  const auto ev = make_evaluation_input(curves, t, e, {});
  EXPECT_NEAR(integrated_auc(ev, kaplan_meier(t, e)), 1.0, 1e-15);
  const auto single = make_evaluation_input({curves[0], curves[2]}, {1, 3}, {1, 0}, {});
  EXPECT_NEAR(integrated_auc(single, kaplan_meier(std::vector<double>{1, 3}, std::vector<int>{1, 0})),
              td_auc(single, 1.0).value(), 1e-15);
  const auto none = flat_input({0.5, 0.5}, {1, 2}, {0, 0});
  EXPECT_THROW(integrated_auc(none, kaplan_meier(std::vector<double>{1, 2}, std::vector<int>{0, 0})), ValidationError);
}

TEST(IntegratedAuc, EightSubjectHandCase) {
  const TimeGrid grid({1, 2, 3, 4});
  std::vector<StepSurvivalCurve> curves;
  const double rows[8][5] = {{1, 0.6, 0.5, 0.4, 0.3}, {1, 0.9, 0.7, 0.6, 0.5}, {1, 0.5, 0.45, 0.2, 0.1},
                             {1, 0.8, 0.8, 0.7, 0.6}, {1, 0.7, 0.4, 0.35, 0.3}, {1, 0.95, 0.9, 0.85, 0.8},
                             {1, 0.85, 0.6, 0.3, 0.2}, {1, 0.75, 0.7, 0.5, 0.45}};
  for (const auto& r : rows) curves.push_back(StepSurvivalCurve(grid, std::vector<double>(r, r + 5)));
  const std::vector<double> t{1, 4, 2, 5, 2, 6, 3, 4};
  const std::vector<int> e{1, 0, 1, 1, 1, 0, 1, 1};
  const auto ev = make_evaluation_input(curves, t, e, {});
  EXPECT_NEAR(integrated_auc(ev, kaplan_meier(t, e)), oracle::integrated_auc(ev).value(), 1e-12);
  EXPECT_EQ(evaluable_times(ev), (std::vector<double>{1, 2, 3, 4, 5}));
}

TEST(Brier, Examples) {
  const auto perfect = make_evaluation_input({StepSurvivalCurve(TimeGrid({1.0}), {1.0, 0.0})}, {1.0}, {1}, {});
  EXPECT_EQ(brier(perfect, 2.0), 0.0);
  const auto worst = make_evaluation_input({flat(1.0)}, {1.0}, {1}, {});
  EXPECT_EQ(brier(worst, 2.0), 1.0);
}

TEST(Brier, FiveSubjectCensoredCase) {
  const TimeGrid grid({1, 2, 3});
  std::vector<StepSurvivalCurve> curves{
      StepSurvivalCurve(grid, {1, 0.7, 0.5, 0.2}), StepSurvivalCurve(grid, {1, 0.9, 0.6, 0.6}),
      StepSurvivalCurve(grid, {1, 0.8, 0.3, 0.1}), StepSurvivalCurve(grid, {1, 1.0, 0.9, 0.8}),
      StepSurvivalCurve(grid, {1, 0.6, 0.6, 0.6})};
  const std::vector<double> gt{1, 1.5, 2, 2.5, 3, 4};
  const std::vector<int> ge{1, 0, 1, 0, 1, 0};
  const auto ev = make_evaluation_input(curves, {1, 2.5, 2, 4, 1.5}, {1, 0, 1, 1, 0}, censoring_km(gt, ge));
  for (double t : {0.5, 1.0, 1.5, 2.0, 2.2, 3.0, 3.9}) EXPECT_NEAR(brier(ev, t), oracle::brier(ev, gt, ge, t), 1e-12);
}

TEST(Brier, FloorLimitsWeights) {
  const auto g = censoring_km(std::vector<double>{1, 2}, std::vector<int>{0, 0});
  const auto ev = make_evaluation_input({flat(0.5)}, {5.0}, {0}, g);
  EXPECT_NEAR(brier(ev, 3.0), 0.25 / 1e-4, 1e-9);
}

TEST(Ibs, ConstantBrier) {
  const TimeGrid grid({1, 2});
  const auto ev = make_evaluation_input({StepSurvivalCurve(grid, {0.5, 0.5, 0.5})}, {10.0}, {0}, {});
  EXPECT_DOUBLE_EQ(ev.t_max, 2.0);
  EXPECT_NEAR(ibs(ev), 0.25, 1e-15);
}

TEST(Ibs, PerfectPredictorBeatsMarginal) {
  const std::vector<double> t{1, 2, 3};
  const std::vector<int> e{1, 1, 1};
  const auto grid = TimeGrid::from_event_times(t, e);
  std::vector<StepSurvivalCurve> perfect, marginal;
  const auto km = kaplan_meier(t, e);
  for (double ti : t) {
    std::vector<double> v{1.0};
    for (double g : grid.points()) v.push_back(g < ti ? 1.0 : 0.0);
    perfect.push_back(StepSurvivalCurve(grid, v));
    marginal.push_back(project_to_grid(km, grid));
  }
  const auto g = censoring_km(t, e);
  const auto ev_p = make_evaluation_input(perfect, t, e, g);
  const auto ev_m = make_evaluation_input(marginal, t, e, g);
  EXPECT_NEAR(ibs(ev_p), oracle::ibs(ev_p, t, e), 1e-15);
  EXPECT_EQ(ibs(ev_p), 0.0);
  EXPECT_NEAR(ibs(ev_m), oracle::ibs(ev_m, t, e), 1e-12);
  EXPECT_GT(ibs(ev_m), ibs(ev_p));
  EXPECT_TRUE(std::isfinite(ibs(ev_m)));
}

TEST(Ibs, ContinuousInCurveValues) {
  std::mt19937_64 gen(13);
  const double eps = 0.01;
  for (int rep = 0; rep < 30; ++rep) {
    auto inst = oracle::random_instance(gen);
    auto ev = inst.ev;
    ev.censoring = StepSurvivalCurve();
    auto shifted = ev;
    for (auto& c : shifted.curves) {
      std::vector<double> v = c.values();
      for (double& x : v) x = (1.0 - eps) * x + eps;
      c = StepSurvivalCurve(c.grid(), v);
    }
    EXPECT_LE(std::abs(ibs(shifted) - ibs(ev)), 2.0 * eps + eps * eps);
  }
}

TEST(Metrics, AgreeWithOraclesOnRandomInstances) {
  std::mt19937_64 gen(2024);
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = oracle::random_instance(gen);
    const auto& ev = inst.ev;

    const double want_c = oracle::c_index(ev.times, ev.events, ev.risk_scores);
    if (std::isnan(want_c)) {
      EXPECT_THROW(c_index(ev), ValidationError);
    } else {
      EXPECT_NEAR(c_index(ev), want_c, 1e-12);
    }

    for (int k = 0; k <= 26; ++k) {
      const double t = 0.25 * k;
      const auto a = td_auc(ev, t), b = oracle::td_auc(ev, t);
      ASSERT_EQ(a.has_value(), b.has_value()) << rep << " t=" << t;
      if (a) {
        EXPECT_NEAR(*a, *b, 1e-12);
      }
      EXPECT_NEAR(brier(ev, t), oracle::brier(ev, inst.train_times, inst.train_events, t), 1e-12);
    }

    const auto want_iauc = oracle::integrated_auc(ev);
    const auto km_test = kaplan_meier(ev.times, ev.events);
    if (want_iauc) {
      EXPECT_NEAR(integrated_auc(ev, km_test), *want_iauc, 1e-12);
    } else {
      EXPECT_THROW(integrated_auc(ev, km_test), ValidationError);
    }

    EXPECT_NEAR(ibs(ev), oracle::ibs(ev, inst.train_times, inst.train_events), 1e-12);

    const auto g = censoring_km(inst.train_times, inst.train_events);
    for (int k = 0; k <= 26; ++k) {
      const double t = 0.25 * k;
      EXPECT_NEAR(g(t), oracle::km_at(inst.train_times, oracle::flip(inst.train_events), t), 1e-12);
    }
  }
}

TEST(Ks, Examples) {
  const auto pts = TimeGrid::uniform_points(10.0, 11);
  EXPECT_EQ(ks_distance(flat(0.7), flat(0.7), pts), 0.0);
  EXPECT_EQ(ks_distance(StepSurvivalCurve(), [](double) { return 0.0; }, pts), 1.0);
}

TEST(Ks, StepVersusAnalyticScan) {
  const auto pts = TimeGrid::uniform_points(500.0, 1000);
  const TimeGrid grid({50, 120, 200, 310, 400});
  const StepSurvivalCurve s(grid, {1, 0.95, 0.8, 0.55, 0.3, 0.1});
  const auto analytic = [](double t) { return std::exp(-1e-10 * std::pow(t, 4.0)); };
  double want = 0.0;
  for (double t : pts) want = std::max(want, std::abs(s(t) - analytic(t)));
  EXPECT_EQ(ks_distance(s, analytic, pts), want);
}

TEST(EvaluationInput, Validation) {
  auto ev = flat_input({0.5, 0.5}, {1, 2}, {1, 0});
  EXPECT_NO_THROW(ev.validate());
  ev.events.pop_back();
  EXPECT_THROW(ev.validate(), ValidationError);
  auto mixed = flat_input({0.5, 0.5}, {1, 2}, {1, 0});
  mixed.curves[1] = StepSurvivalCurve(TimeGrid({2.0}), {1.0, 0.5});
  EXPECT_THROW(mixed.validate(), ValidationError);
}
