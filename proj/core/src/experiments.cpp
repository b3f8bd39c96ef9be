#include "sdpm/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "sdpm/csv.hpp"
#include "sdpm/errors.hpp"
#include "sdpm/parallel.hpp"

namespace sdpm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("output directory must be given");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory '" + dir + "': " + ec.message());
}

std::size_t resolve_threads(std::size_t threads) { return threads == 0 ? worker_threads() : threads; }

// Copies the source rows of each split part verbatim.
void write_split_csvs(const RunConfig& cfg, const RawTable& raw, const SplitIndices& split, const fs::path& dir) {
  const csv::Table table = csv::read_file(cfg.data.path);
  std::map<std::size_t, std::size_t> row_of_line;
  for (std::size_t r = 0; r < table.lines.size(); ++r) row_of_line[table.lines[r]] = r;
  const auto write = [&](const std::string& name, const std::vector<std::size_t>& rows) {
    auto os = open_out(dir / name);
    for (std::size_t c = 0; c < table.header.size(); ++c) os << (c ? "," : "") << csv::escape(table.header[c]);
    os << '\n';
    for (std::size_t idx : rows) {
      const auto& row = table.rows[row_of_line.at(raw.source_lines[idx])];
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << csv::escape(row[c]);
      os << '\n';
    }
  };
  write("train.csv", split.train);
  write("validation.csv", split.validation);
  write("test.csv", split.test);
}

}  // namespace

TrainOutcome train_from_config(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.data.path.empty()) throw ValidationError("config: data.path must be set");
  if (cfg.data.columns.empty()) throw ValidationError("config: data.columns must be set");

  LoadOptions load;
  load.time_shift_epsilon = cfg.data.time_shift_epsilon;
  RawTable raw = read_raw_csv(cfg.data.path, cfg.data.columns, load);
  SplitIndices split = stratified_split(raw.events, cfg.split.fractions, cfg.split.seed);

  Preprocessor pre = Preprocessor::fit(raw, split.train);
  SurvivalDataset train_ds = pre.transform(raw, split.train);
  SurvivalDataset val_ds = pre.transform(raw, split.validation);
  SurvivalDataset test_ds = pre.transform(raw, split.test);

  TargetTransform tf = fit_target_transform(train_ds.times, cfg.target_mode);
  DiffusionSchedule sched = cosine_schedule(cfg.schedule.steps, cfg.schedule.offset);
  DenoiserNet net(cfg.network, pre.layout(), mix_seed(cfg.training.seed, 0x1417));
  TrainHistory history = train(net, train_ds, val_ds, tf, sched, cfg.training);

  const TimeGrid grid = TimeGrid::from_event_times(train_ds.times, train_ds.events, cfg.metrics.grid_include_censored);
  json report = {{"rows", raw.size()},
                 {"dropped_rows", raw.dropped_rows},
                 {"train_rows", split.train.size()},
                 {"validation_rows", split.validation.size()},
                 {"test_rows", split.test.size()},
                 {"train_event_rate", event_rate(train_ds)},
                 {"grid_size", grid.size()},
                 {"best_epoch", history.best_epoch},
                 {"parameters", net.parameter_count()},
                 {"schema_hash", pre.schema_hash()},
                 {"warnings", train_ds.warnings},
                 {"history", history.to_json()}};

  json info = {{"time_shift_epsilon", cfg.data.time_shift_epsilon},
               {"best_epoch", history.best_epoch},
               {"best_validation_loss", history.best_validation_loss}};
  Checkpoint ckpt{std::move(pre), tf, std::move(sched), std::move(net), train_ds.times, train_ds.events, info};
  return TrainOutcome{std::move(raw),     std::move(split),   std::move(train_ds), std::move(val_ds),
                      std::move(test_ds), std::move(ckpt),    std::move(history),  std::move(report)};
}

TrainOutcome cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  TrainOutcome out = train_from_config(cfg);
  write_text(dir / "config.json", cfg.canonical());
  write_text(dir / "train_report.json", out.report.dump(2) + "\n");
  {
    auto os = open_out(dir / "loss_history.csv");
    os << "epoch,train_loss,validation_loss\n";
    for (std::size_t e = 0; e < out.history.train_loss.size(); ++e) {
      os << e + 1 << ',' << csv::format_double(out.history.train_loss[e]) << ','
         << (e < out.history.validation_loss.size() ? csv::format_double(out.history.validation_loss[e]) : "")
         << '\n';
    }
  }
  write_split_csvs(cfg, out.raw, out.split, dir);
  save_checkpoint(out.checkpoint, (dir / "checkpoint.sdpm").string());
  if (out.history.diverged) throw NumericError("training diverged: " + out.history.divergence_message);
  return out;
}

DiffusionSchedule inference_schedule(const Checkpoint& ckpt, std::optional<std::size_t> inference_steps) {
  if (!inference_steps) return ckpt.schedule;
  if (*inference_steps < 1) throw ValidationError("inference steps must be >= 1");
  return rescale_steps(ckpt.schedule, *inference_steps);
}

TimeGrid training_grid(const Checkpoint& ckpt, bool include_censored) {
  return TimeGrid::from_event_times(ckpt.train_times, ckpt.train_events, include_censored);
}

std::optional<LatentBox> sampling_box(const Checkpoint& ckpt, std::optional<double> clip_margin) {
  if (!clip_margin || ckpt.transform.mode != TargetMode::Transformed) return std::nullopt;
  return latent_box(ckpt.transform, ckpt.train_times, *clip_margin);
}

EvaluationResult evaluate_checkpoint(const Checkpoint& ckpt, const SurvivalDataset& test, const EvalOptions& opts) {
  if (opts.samples < 1) throw ValidationError("samples per subject must be >= 1");
  if (test.size() == 0) throw ValidationError("evaluate: empty test set");
  if (static_cast<std::size_t>(test.features.cols()) != ckpt.net.input_dim()) {
    throw ValidationError("evaluate: feature width does not match the checkpoint");
  }
  const DiffusionSchedule sched = inference_schedule(ckpt, opts.inference_steps);
  const TimeGrid grid = training_grid(ckpt, opts.metrics.grid_include_censored);
  if (grid.empty()) throw ValidationError("evaluate: training data has no events, time grid is empty");

  EvaluationResult res;
  const auto t0 = std::chrono::steady_clock::now();
  res.outcomes = generate_for_subjects(ckpt.net, test.features, opts.samples, sched, ckpt.transform, opts.seed,
                                       resolve_threads(opts.threads), sampling_box(ckpt, opts.clip_margin));
  res.generation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<StepSurvivalCurve> curves;
  curves.reserve(res.outcomes.size());
  for (const auto& o : res.outcomes) curves.push_back(survival_from_samples(o, grid));
  res.input = make_evaluation_input(std::move(curves), test.times, test.events,
                                    censoring_km(ckpt.train_times, ckpt.train_events), opts.metrics.censoring_floor);

  const double t_max_train = *std::max_element(ckpt.train_times.begin(), ckpt.train_times.end());
  const auto diag = generation_diagnostics(std::span<const GeneratedOutcomes>(res.outcomes), t_max_train);
  const StepSurvivalCurve km_test = kaplan_meier(test.times, test.events);

  json bs_series = json::array();
  for (double t : grid.points()) bs_series.push_back({{"t", t}, {"brier", brier(res.input, t)}});
  json auc_series = json::array();
  for (double t : evaluable_times(res.input)) {
    if (auto a = td_auc(res.input, t)) auc_series.push_back({{"t", t}, {"auc", *a}});
  }

  res.report = {{"subjects", test.size()},
                {"samples_per_subject", opts.samples},
                {"seed", opts.seed},
                {"inference_steps", sched.steps()},
                {"clip_margin", opts.clip_margin ? json(*opts.clip_margin) : json(nullptr)},
                {"grid_size", grid.size()},
                {"t_max", res.input.t_max},
                {"c_index", c_index(res.input)},
                {"integrated_auc", integrated_auc(res.input, km_test)},
                {"ibs", ibs(res.input)},
                {"diagnostics",
                 {{"observed_event_rate", event_rate(test)},
                  {"generated_event_rate", diag.event_rate},
                  {"event_rate_error", std::abs(diag.event_rate - event_rate(test))},
                  {"negative_rate", diag.negative_rate},
                  {"range_exceed_rate", diag.range_exceed_rate},
                  {"generated_pairs", diag.count}}},
                {"brier_series", bs_series},
                {"auc_series", auc_series}};
  return res;
}

EvaluationResult cmd_evaluate(const std::string& checkpoint_path, const std::string& test_csv,
                              const EvalOptions& opts, const std::string& out_dir) {
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  LoadOptions load;
  load.time_shift_epsilon = ckpt.info.value("time_shift_epsilon", 0.0);
  const SurvivalDataset test = load_csv(test_csv, ckpt.preprocessor, load);
  EvaluationResult res = evaluate_checkpoint(ckpt, test, opts);

  write_text(dir / "report.json", res.report.dump(2) + "\n");
  write_text(dir / "timing.json",
             json{{"generation_seconds", res.generation_seconds}, {"threads", resolve_threads(opts.threads)}}.dump(2) +
                 "\n");
  {
    auto os = open_out(dir / "brier_series.csv");
    os << "t,brier\n";
    for (const auto& p : res.report["brier_series"]) {
      os << csv::format_double(p["t"].get<double>()) << ',' << csv::format_double(p["brier"].get<double>()) << '\n';
    }
  }
  {
    auto os = open_out(dir / "auc_series.csv");
    os << "t,auc\n";
    for (const auto& p : res.report["auc_series"]) {
      os << csv::format_double(p["t"].get<double>()) << ',' << csv::format_double(p["auc"].get<double>()) << '\n';
    }
  }
  {
    auto os = open_out(dir / "survival_curves.csv");
    os << "subject_id,t_left,value\n";
    for (std::size_t s = 0; s < res.input.curves.size(); ++s) {
      const auto& c = res.input.curves[s];
      os << s << ",0," << csv::format_double(c.values()[0]) << '\n';
      for (std::size_t k = 0; k < c.grid().size(); ++k) {
        os << s << ',' << csv::format_double(c.grid().points()[k]) << ',' << csv::format_double(c.values()[k + 1])
           << '\n';
      }
    }
  }
  return res;
}

void cmd_sample(const std::string& checkpoint_path, const std::string& features_csv, const EvalOptions& opts,
                const std::string& out_csv) {
  if (opts.samples < 1) throw ValidationError("samples per subject must be >= 1");
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  LoadOptions load;
  load.require_targets = false;
  load.time_shift_epsilon = ckpt.info.value("time_shift_epsilon", 0.0);
  const SurvivalDataset ds = load_csv(features_csv, ckpt.preprocessor, load);
  const DiffusionSchedule sched = inference_schedule(ckpt, opts.inference_steps);
  const auto outs = generate_for_subjects(ckpt.net, ds.features, opts.samples, sched, ckpt.transform, opts.seed,
                                          resolve_threads(opts.threads), sampling_box(ckpt, opts.clip_margin));
  auto os = open_out(out_csv);
  os << "subject_id,sample_id,t,delta\n";
  for (std::size_t s = 0; s < outs.size(); ++s) {
    for (std::size_t k = 0; k < outs[s].pairs.size(); ++k) {
      const auto& p = outs[s].pairs[k];
      os << s << ',' << k << ',' << csv::format_double(p.time) << ',' << p.event << '\n';
    }
  }
}

json SynthOutput::to_json() const {
  json j = model.to_json();
  j["seed"] = seed;
  j["rows"] = dataset.size();
  j["event_rate"] = event_rate(dataset);
  return j;
}

SynthOutput make_synthetic(const SynthOptions& opts) {
  if (opts.rows < 2) throw ValidationError("synth: rows must be >= 2");
  if (opts.features < 1) throw ValidationError("synth: features must be >= 1");
  Rng feature_rng = Rng::substream(opts.seed, 1);
  Rng coef_rng = Rng::substream(opts.seed, 2);
  Rng calib_rng = Rng::substream(opts.seed, 3);
  Rng data_rng = Rng::substream(opts.seed, 4);
  SynthOutput out;
  out.seed = opts.seed;
  out.xs = gaussian_features(opts.rows, opts.features, feature_rng);
  out.model = random_cox_weibull(opts.features, coef_rng, opts.lambda, opts.nu);
  out.model.c_max = calibrate_censoring(out.model, out.xs, opts.event_rate, calib_rng);
  out.dataset = generate_dataset(out.model, out.xs, data_rng);
  return out;
}

SynthOutput cmd_synth(const SynthOptions& opts, const std::string& out_dir) {
  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  SynthOutput out = make_synthetic(opts);
  {
    auto os = open_out(dir / "data.csv");
    write_dataset_csv(os, out.dataset);
  }
  json model = out.to_json();
  model["target_event_rate"] = opts.event_rate;
  write_text(dir / "model.json", model.dump(2) + "\n");
  RunConfig fragment;
  fragment.data.path = (dir / "data.csv").string();
  fragment.data.columns = synthetic_schema(opts.features);
  write_text(dir / "columns.json", json{{"data", fragment.to_json()["data"]}}.dump(2) + "\n");
  return out;
}

json SynthStudyConfig::to_json() const {
  return {{"base", base.to_json()},   {"rows", rows},           {"features", features},
          {"event_rates", event_rates}, {"samples", samples},   {"horizon", horizon},
          {"grid_points", grid_points}, {"lambda", lambda},     {"nu", nu},
          {"seed", seed},               {"write_curves", write_curves},
          {"project_to_training_grid", project_to_training_grid}};
}

SynthStudyConfig SynthStudyConfig::from_json(const json& j) {
  SynthStudyConfig c;
  if (!j.is_object()) throw ValidationError("synth-study config: must be an object");
  const json defaults = c.to_json();
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("synth-study config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("base")) c.base = RunConfig::from_json(j["base"]);
    c.rows = j.value("rows", c.rows);
    c.features = j.value("features", c.features);
    c.event_rates = j.value("event_rates", c.event_rates);
    c.samples = j.value("samples", c.samples);
    c.horizon = j.value("horizon", c.horizon);
    c.grid_points = j.value("grid_points", c.grid_points);
    c.lambda = j.value("lambda", c.lambda);
    c.nu = j.value("nu", c.nu);
    c.seed = j.value("seed", c.seed);
    c.write_curves = j.value("write_curves", c.write_curves);
    c.project_to_training_grid = j.value("project_to_training_grid", c.project_to_training_grid);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth-study config: ") + e.what());
  }
  if (c.event_rates.empty() || c.samples.empty()) {
    throw ValidationError("synth-study config: event_rates and samples must be non-empty");
  }
  for (std::size_t k : c.samples) {
    if (k < 1) throw ValidationError("synth-study config: samples must be >= 1");
  }
  if (!(c.horizon > 0.0) || c.grid_points < 2) throw ValidationError("synth-study config: invalid grid");
  return c;
}

SynthStudyResult cmd_synth_study(const SynthStudyConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  const fs::path root(out_dir);
  const std::vector<double> ks_points = TimeGrid::uniform_points(cfg.horizon, cfg.grid_points);
  const std::size_t threads = resolve_threads(cfg.base.sampler.threads);

  SynthStudyResult result;
  json rows = json::array();
  for (std::size_t g = 0; g < cfg.event_rates.size(); ++g) {
    const double rate = cfg.event_rates[g];
    std::ostringstream name;
    name << "rate_" << std::setw(2) << std::setfill('0') << static_cast<int>(std::lround(rate * 100));
    const fs::path dir = root / name.str();

    SynthOptions so;
    so.rows = cfg.rows;
    so.features = cfg.features;
    so.event_rate = rate;
    so.lambda = cfg.lambda;
    so.nu = cfg.nu;
    so.seed = mix_seed(cfg.seed, g);
    const SynthOutput synth = cmd_synth(so, dir.string());

    RunConfig run = cfg.base;
    run.data.path = (dir / "data.csv").string();
    run.data.columns = synthetic_schema(cfg.features);
    run.data.time_shift_epsilon = 0.0;
    TrainOutcome trained = cmd_train(run, (dir / "model").string());

    RegimeResult reg;
    reg.target_event_rate = rate;
    reg.data_event_rate = event_rate(synth.dataset);
    reg.model = synth.model;
    reg.directory = dir.string();

    const TimeGrid grid = training_grid(trained.checkpoint, run.metrics.grid_include_censored);
    const auto& test_rows = trained.split.test;
    std::vector<std::vector<double>> analytic(test_rows.size());
    std::vector<double> xbuf(cfg.features);
    for (std::size_t s = 0; s < test_rows.size(); ++s) {
      for (std::size_t c = 0; c < cfg.features; ++c) {
        xbuf[c] = synth.xs(static_cast<Eigen::Index>(test_rows[s]), static_cast<Eigen::Index>(c));
      }
      analytic[s].reserve(ks_points.size());
      for (double t : ks_points) analytic[s].push_back(analytic_survival(synth.model, xbuf, t));
    }
    if (cfg.write_curves) {
      auto os = open_out(dir / "curves_analytic.csv");
      os << "subject_id,t,value\n";
      for (std::size_t s = 0; s < analytic.size(); ++s) {
        for (std::size_t p = 0; p < ks_points.size(); ++p) {
          os << s << ',' << csv::format_double(ks_points[p]) << ',' << csv::format_double(analytic[s][p]) << '\n';
        }
      }
    }

    json row = {{"event_rate", rate}, {"data_event_rate", reg.data_event_rate}};
    for (std::size_t k : cfg.samples) {
      const auto outs = generate_for_subjects(trained.checkpoint.net, trained.test.features, k,
                                              trained.checkpoint.schedule, trained.checkpoint.transform,
                                              mix_seed(so.seed, k), threads,
                                              sampling_box(trained.checkpoint, cfg.base.sampler.clip_margin));
      double total = 0.0;
      std::unique_ptr<std::ofstream> curve_os;
      if (cfg.write_curves) {
        curve_os = std::make_unique<std::ofstream>(open_out(dir / ("curves_K" + std::to_string(k) + ".csv")));
        *curve_os << "subject_id,t,value\n";
      }
      for (std::size_t s = 0; s < outs.size(); ++s) {
        const StepSurvivalCurve curve =
            cfg.project_to_training_grid ? survival_from_samples(outs[s], grid) : survival_from_samples(outs[s]);
        double d = 0.0;
        for (std::size_t p = 0; p < ks_points.size(); ++p) {
          const double v = curve(ks_points[p]);
          d = std::max(d, std::abs(v - analytic[s][p]));
          if (curve_os) *curve_os << s << ',' << csv::format_double(ks_points[p]) << ',' << csv::format_double(v) << '\n';
        }
        total += d;
      }
      const double mean = total / static_cast<double>(outs.size());
      const auto diag = generation_diagnostics(std::span<const GeneratedOutcomes>(outs), 1.0);
      reg.mean_ks.push_back(mean);
      reg.generated_event_rate.push_back(diag.event_rate);
      row["K" + std::to_string(k)] = mean;
      row["generated_event_rate_K" + std::to_string(k)] = diag.event_rate;
    }
    rows.push_back(row);
    reg.trained = std::move(trained);
    result.regimes.push_back(std::move(reg));
  }

  result.table = {{"horizon", cfg.horizon}, {"grid_points", cfg.grid_points}, {"samples", cfg.samples}, {"rows", rows}};
  write_text(root / "ks_table.json", result.table.dump(2) + "\n");
  auto os = open_out(root / "ks_table.csv");
  os << "event_rate";
  for (std::size_t k : cfg.samples) os << ",K=" << k;
  os << '\n';
  for (const auto& reg : result.regimes) {
    os << csv::format_double(reg.target_event_rate);
    for (double v : reg.mean_ks) os << ',' << csv::format_double(v);
    os << '\n';
  }
  return result;
}

json cmd_ablation(const RunConfig& first, const RunConfig& second, const std::string& out_dir) {
  json a = first.to_json(), b = second.to_json();
  a.erase("target");
  b.erase("target");
  if (a != b) throw ValidationError("ablation: configs may differ only in target.mode");
  if (first.target_mode == second.target_mode) throw ValidationError("ablation: configs must use different target modes");
  ensure_dir(out_dir);

  json report = json::object();
  report["dataset"] = first.data.path;
  for (const RunConfig* cfg : {&first, &second}) {
    const std::string mode = to_string(cfg->target_mode);
    const fs::path dir = fs::path(out_dir) / mode;
    TrainOutcome trained = cmd_train(*cfg, dir.string());
    EvalOptions eo;
    eo.samples = cfg->sampler.samples;
    eo.inference_steps = cfg->sampler.inference_steps;
    eo.seed = cfg->seed;
    eo.threads = cfg->sampler.threads;
    eo.clip_margin = cfg->sampler.clip_margin;
    eo.metrics = cfg->metrics;
    const EvaluationResult ev = evaluate_checkpoint(trained.checkpoint, trained.test, eo);
    write_text(dir / "report.json", ev.report.dump(2) + "\n");
    const auto& d = ev.report["diagnostics"];
    report[mode] = {{"c_index", ev.report["c_index"]},
                    {"integrated_auc", ev.report["integrated_auc"]},
                    {"ibs", ev.report["ibs"]},
                    {"observed_event_rate", d["observed_event_rate"]},
                    {"generated_event_rate", d["generated_event_rate"]},
                    {"event_rate_error", d["event_rate_error"]},
                    {"negative_rate", d["negative_rate"]},
                    {"range_exceed_rate", d["range_exceed_rate"]}};
  }
  write_text(fs::path(out_dir) / "ablation_report.json", report.dump(2) + "\n");
  const std::string transformed = to_string(TargetMode::Transformed);
  if (report[transformed]["negative_rate"].get<double>() != 0.0) {
    throw NumericError("ablation: transformed mode produced negative times");
  }
  return report;
}

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return 1;
  return 2;
}

}  // namespace sdpm
