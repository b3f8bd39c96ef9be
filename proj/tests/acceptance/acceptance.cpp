#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sdpm/errors.hpp"
#include "sdpm/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdpm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Network and optimizer settings shared by every trained model below. All
// values lie inside the documented search space.
RunConfig study_base() {
  RunConfig cfg;
  cfg.network.hidden_layers = 2;
  cfg.network.hidden_dim = 64;
  cfg.network.dropout = 0.1;
  cfg.network.fourier_frequencies = 8;
  cfg.network.fourier_init_scale = 0.1;
  cfg.training.learning_rate = 5e-4;
  cfg.training.validation_repeats = 16;
  return cfg;
}

Verdict oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 gen(20240601);
  double worst = 0.0;
  std::size_t mismatched_defs = 0;
  const auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = oracle::random_instance(gen);
    const auto& ev = inst.ev;
    const double want_c = oracle::c_index(ev.times, ev.events, ev.risk_scores);
    if (std::isnan(want_c)) {
      try {
        c_index(ev);
        ++mismatched_defs;
      } catch (const ValidationError&) {
      }
    } else {
      track(c_index(ev), want_c);
    }
    const auto km = kaplan_meier(ev.times, ev.events);
    const auto g = censoring_km(inst.train_times, inst.train_events);
    const auto g_flip = oracle::flip(inst.train_events);
    for (int k = 0; k <= 26; ++k) {
      const double t = 0.25 * k;
      const auto a = td_auc(ev, t), b = oracle::td_auc(ev, t);
      if (a.has_value() != b.has_value()) {
        ++mismatched_defs;
      } else if (a) {
        track(*a, *b);
      }
      track(brier(ev, t), oracle::brier(ev, inst.train_times, inst.train_events, t));
      track(km(t), oracle::km_at(ev.times, ev.events, t));
      track(km.left_limit(t), oracle::km_at(ev.times, ev.events, t, true));
      track(g(t), oracle::km_at(inst.train_times, g_flip, t));
    }
    const auto want_iauc = oracle::integrated_auc(ev);
    try {
      const double got = integrated_auc(ev, km);
      if (want_iauc) {
        track(got, *want_iauc);
      } else {
        ++mismatched_defs;
      }
    } catch (const ValidationError&) {
      if (want_iauc) ++mismatched_defs;
    }
    track(ibs(ev), oracle::ibs(ev, inst.train_times, inst.train_events));
  }
  const double secs = seconds_since(start);
  Verdict o;
  o.pass = worst <= 1e-12 && mismatched_defs == 0 && secs < 10.0;
  o.detail = "max abs diff " + fmt(worst) + ", definedness mismatches " + std::to_string(mismatched_defs) +
             ", " + fmt(secs, 3) + " s";
  return o;
}

Verdict gradient_fidelity() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string where;
  for (auto norm : {NormMode::None, NormMode::Layer, NormMode::AdaLNZero}) {
    for (bool noise_embed : {false, true}) {
      const auto res = gradcheck::check(norm, noise_embed, 7);
      if (res.max_rel_error > worst) {
        worst = res.max_rel_error;
        where = std::string(to_string(norm)) + (noise_embed ? "+noise_embed" : "") + " " + res.worst_tensor;
      }
    }
  }
  const double secs = seconds_since(start);
  Verdict o;
  o.pass = worst < 1e-4 && secs < 60.0;
  o.detail = "max rel error " + fmt(worst, 3) + " (" + where + "), " + fmt(secs, 3) + " s";
  return o;
}

Verdict transform_guarantee(const RegimeResult& regime, const fs::path& work) {
  const auto& trained = *regime.trained;
  const auto& ckpt = trained.checkpoint;
  const std::size_t k = (100000 + trained.test.size() - 1) / trained.test.size();
  const auto outs = generate_for_subjects(ckpt.net, trained.test.features, k, ckpt.schedule, ckpt.transform, 31, 0);
  const auto diag = generation_diagnostics(std::span<const GeneratedOutcomes>(outs), 1.0);

  // Raw-time ablation on times spread over several orders of magnitude.
  SynthOptions so;
  so.rows = 500;
  so.features = 6;
  so.event_rate = 0.5;
  so.lambda = 1.0;
  so.nu = 0.5;
  so.seed = 77;
  const fs::path data_dir = work / "ablation_data";
  cmd_synth(so, data_dir.string());
  RunConfig first = study_base();
  first.data.path = (data_dir / "data.csv").string();
  first.data.columns = synthetic_schema(so.features);
  first.sampler.samples = 1000;
  RunConfig second = first;
  second.target_mode = TargetMode::RawAblation;
  const json report = cmd_ablation(first, second, (work / "ablation").string());
  const double raw_negative = report["raw_ablation"]["negative_rate"].get<double>();
  const double ablation_transformed = report["transformed"]["negative_rate"].get<double>();

  Verdict o;
  o.pass = diag.count >= 100000 && diag.negative_rate == 0.0 && ablation_transformed == 0.0 && raw_negative > 0.0;
  o.detail = "transformed negative rate " + fmt(diag.negative_rate) + " over " + std::to_string(diag.count) +
             " pairs (ablation run " + fmt(ablation_transformed) + "), raw_ablation negative rate " +
             fmt(raw_negative);
  return o;
}

Verdict synthetic_study(const SynthStudyResult& study, double secs) {
  int monotone = 0, improved = 0;
  std::string table;
  for (const auto& reg : study.regimes) {
    const auto& ks = reg.mean_ks;
    bool mono = true;
    for (std::size_t i = 1; i < ks.size(); ++i) mono = mono && ks[i] < ks[i - 1];
    monotone += mono;
    improved += ks.back() < ks.front();
    table += " " + fmt(reg.target_event_rate, 2) + ":[";
    for (std::size_t i = 0; i < ks.size(); ++i) table += (i ? "," : "") + fmt(ks[i]);
    table += "]";
  }
  Verdict o;
  o.pass = study.regimes.size() == 3 && monotone >= 2 && improved == 3 && secs <= 1800.0;
  o.detail = "mean KS per regime (K=100,500,2000)" + table + "; monotone in " + std::to_string(monotone) +
             "/3, K=2000<K=100 in " + std::to_string(improved) + "/3, " + fmt(secs, 4) + " s";
  return o;
}

Verdict event_rate_calibration(const RegimeResult& regime) {
  const double generated = regime.generated_event_rate.back();
  Verdict o;
  o.pass = std::abs(generated - 0.5) <= 0.10;
  o.detail = "generated event rate " + fmt(generated) + " (data " + fmt(regime.data_event_rate) + ", target 0.50)";
  return o;
}

Verdict k_sweep(const RegimeResult& regime) {
  const auto& trained = *regime.trained;
  const std::vector<std::size_t> ks{128, 512, 2048};
  std::vector<double> mean_auc(ks.size(), 0.0), mean_ibs(ks.size(), 0.0);
  const int seeds = 30;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    for (int s = 0; s < seeds; ++s) {
      EvalOptions opts;
      opts.samples = ks[i];
      opts.seed = 1000 + static_cast<std::uint64_t>(s);
      const auto res = evaluate_checkpoint(trained.checkpoint, trained.test, opts);
      mean_auc[i] += res.report["integrated_auc"].get<double>() / seeds;
      mean_ibs[i] += res.report["ibs"].get<double>() / seeds;
    }
  }
  Verdict o;
  o.pass = mean_auc.back() >= mean_auc.front() && mean_ibs.back() <= mean_ibs.front();
  o.detail = "mean iAUC " + fmt(mean_auc[0]) + " / " + fmt(mean_auc[1]) + " / " + fmt(mean_auc[2]) + ", mean IBS " +
             fmt(mean_ibs[0]) + " / " + fmt(mean_ibs[1]) + " / " + fmt(mean_ibs[2]) + " at K=128/512/2048";
  return o;
}

Verdict step_rescaling(const RegimeResult& regime) {
  const auto& trained = *regime.trained;
  const std::vector<std::size_t> steps{2, 16, 64};
  std::vector<double> mean_ibs(steps.size(), 0.0);
  const int seeds = 5;
  bool completed = true;
  std::string error;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (int s = 0; s < seeds; ++s) {
      EvalOptions opts;
      opts.samples = 1000;
      opts.inference_steps = steps[i];
      opts.seed = 500 + static_cast<std::uint64_t>(s);
      try {
        mean_ibs[i] += evaluate_checkpoint(trained.checkpoint, trained.test, opts).report["ibs"].get<double>() / seeds;
      } catch (const std::exception& e) {
        completed = false;
        error = e.what();
      }
    }
  }
  Verdict o;
  o.pass = completed && mean_ibs[0] > mean_ibs[1];
  o.detail = "trained r=" + std::to_string(trained.checkpoint.schedule.steps()) + ", mean IBS " + fmt(mean_ibs[0]) +
             " / " + fmt(mean_ibs[1]) + " / " + fmt(mean_ibs[2]) + " at r_new=2/16/64" +
             (completed ? "" : ", error: " + error);
  return o;
}

Verdict determinism(const RegimeResult& regime, const fs::path& work) {
  const fs::path model = fs::path(regime.directory) / "model";
  EvalOptions opts;
  opts.samples = 500;
  opts.seed = 99;
  cmd_evaluate((model / "checkpoint.sdpm").string(), (model / "test.csv").string(), opts,
               (work / "determinism_a").string());
  cmd_evaluate((model / "checkpoint.sdpm").string(), (model / "test.csv").string(), opts,
               (work / "determinism_b").string());
  const auto a = slurp(work / "determinism_a" / "report.json");
  const auto b = slurp(work / "determinism_b" / "report.json");
  Verdict o;
  o.pass = !a.empty() && a == b;
  o.detail = "report.json " + std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different");
  return o;
}

Verdict km_convergence() {
  // E ~ Exp(1), C ~ U[0, 3]; the product-limit curve targets exp(-t).
  std::mt19937_64 gen(4242);
  std::exponential_distribution<double> e_d(1.0);
  std::uniform_real_distribution<double> c_d(0.0, 3.0);
  GeneratedOutcomes out;
  for (int k = 0; k < 100000; ++k) {
    const double e = e_d(gen), c = c_d(gen);
    out.pairs.push_back({std::min(e, c), e <= c ? 1 : 0});
  }
  const auto curve = survival_from_samples(out);
  double worst = 0.0;
  for (double t : TimeGrid::uniform_points(2.5, 1000)) worst = std::max(worst, std::abs(curve(t) - std::exp(-t)));
  Verdict o;
  o.pass = worst <= 0.02;
  o.detail = "sup-norm " + fmt(worst) + " on [0, 2.5] with 1e5 draws";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sdpm_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  const auto report = [&](int id, const std::string& name, const std::function<Verdict()>& fn) {
    Verdict o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "oracle equivalence", oracle_equivalence);
  report(2, "gradient fidelity", gradient_fidelity);

  SynthStudyConfig study_cfg;
  study_cfg.base = study_base();
  study_cfg.write_curves = false;
  std::optional<SynthStudyResult> study;
  double study_secs = 0.0;
  std::string study_error;
  try {
    const auto start = Clock::now();
    study = cmd_synth_study(study_cfg, (work / "synth_study").string());
    study_secs = seconds_since(start);
  } catch (const std::exception& e) {
    study_error = e.what();
  }
  const auto with_study = [&](auto fn) {
    return [&, fn]() -> Verdict {
      if (!study) return {false, "synthetic study failed: " + study_error};
      return fn(*study);
    };
  };
  const auto half = [](const SynthStudyResult& s) -> const RegimeResult& {
    for (const auto& r : s.regimes) {
      if (r.target_event_rate == 0.5) return r;
    }
    throw ValidationError("no 50% regime");
  };

  report(3, "transform structural guarantee",
         with_study([&](const SynthStudyResult& s) { return transform_guarantee(half(s), work); }));
  report(4, "synthetic Cox-Weibull KS trend",
         with_study([&](const SynthStudyResult& s) { return synthetic_study(s, study_secs); }));
  report(5, "event-rate calibration", with_study([&](const SynthStudyResult& s) { return event_rate_calibration(half(s)); }));
  report(6, "K-sweep trend", with_study([&](const SynthStudyResult& s) { return k_sweep(half(s)); }));
  report(7, "step rescaling robustness", with_study([&](const SynthStudyResult& s) { return step_rescaling(half(s)); }));
  report(8, "determinism", with_study([&](const SynthStudyResult& s) { return determinism(half(s), work); }));
  report(9, "KM convergence", km_convergence);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
