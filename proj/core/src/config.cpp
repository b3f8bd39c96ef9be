#include "sdpm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sdpm/errors.hpp"

namespace sdpm {

namespace {

using nlohmann::json;

json columns_to_json(const std::vector<ColumnSpec>& cols) {
  json arr = json::array();
  for (const auto& c : cols) {
    json o = {{"name", c.name}, {"kind", to_string(c.kind)}};
    arr.push_back(o);
  }
  return arr;
}

std::vector<ColumnSpec> columns_from_json(const json& arr) {
  if (!arr.is_array()) throw ValidationError("config: data.columns must be an array");
  std::vector<ColumnSpec> cols;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& o = arr[i];
    const std::string where = "data.columns[" + std::to_string(i) + "]";
    if (!o.is_object()) throw ValidationError("config: " + where + " must be an object");
    for (const auto& [key, _] : o.items()) {
      if (key != "name" && key != "kind") throw ValidationError("config: unknown key '" + where + "." + key + "'");
    }
    if (!o.contains("name") || !o.contains("kind")) {
      throw ValidationError("config: " + where + " needs 'name' and 'kind'");
    }
    cols.push_back({o["name"].get<std::string>(), column_kind_from_string(o["kind"].get<std::string>()), {}});
  }
  return cols;
}

// Overlays `user` onto `base`, rejecting keys absent from `base`. Objects
// recurse; every other value replaces the default wholesale.
void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) {
    throw ValidationError("config: '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ValidationError("config: unknown key '" + where + "'");
    json& slot = base[key];
    if (slot.is_object() && where != "data.columns") {
      merge_strict(slot, value, where);
    } else {
      slot = value;
    }
  }
}

template <class F>
auto section(const char* name, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + name + ": " + e.what());
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind("config:", 0) == 0) throw;
    throw ValidationError(std::string("config: ") + name + ": " + msg);
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!data.columns.empty()) validate_schema(data.columns);
  if (!(data.time_shift_epsilon >= 0.0)) throw ValidationError("config: data.time_shift_epsilon must be >= 0");
  double sum = 0.0;
  for (double f : split.fractions) {
    if (!(f >= 0.0)) throw ValidationError("config: split.fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("config: split.fractions must sum to 1");
  if (!(split.fractions[0] > 0.0)) throw ValidationError("config: split.fractions[0] must be positive");
  if (schedule.steps < 1) throw ValidationError("config: schedule.steps must be >= 1");
  if (!(schedule.offset > 0.0)) throw ValidationError("config: schedule.offset must be positive");
  section("network", [&] { network.validate(); return 0; });
  section("training", [&] { training.validate(); return 0; });
  if (sampler.samples < 1) throw ValidationError("config: sampler.samples must be >= 1");
  if (sampler.inference_steps && *sampler.inference_steps < 1) {
    throw ValidationError("config: sampler.inference_steps must be >= 1");
  }
  if (sampler.clip_margin && !(*sampler.clip_margin >= 0.0)) {
    throw ValidationError("config: sampler.clip_margin must be non-negative");
  }
  if (!(metrics.censoring_floor > 0.0 && metrics.censoring_floor <= 1.0)) {
    throw ValidationError("config: metrics.censoring_floor must lie in (0, 1]");
  }
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["data"] = {{"path", data.path}, {"columns", columns_to_json(data.columns)},
               {"time_shift_epsilon", data.time_shift_epsilon}};
  j["split"] = {{"fractions", split.fractions}, {"seed", split.seed}};
  j["target"] = {{"mode", to_string(target_mode)}};
  j["schedule"] = {{"steps", schedule.steps}, {"offset", schedule.offset}};
  j["network"] = network.to_json();
  j["training"] = training.to_json();
  j["sampler"] = {{"samples", sampler.samples},
                  {"inference_steps", sampler.inference_steps ? json(*sampler.inference_steps) : json(nullptr)},
                  {"threads", sampler.threads},
                  {"clip_margin", sampler.clip_margin ? json(*sampler.clip_margin) : json(nullptr)}};
  j["metrics"] = {{"censoring_floor", metrics.censoring_floor},
                  {"grid_include_censored", metrics.grid_include_censored}};
  j["seed"] = seed;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& user) {
  json j = RunConfig{}.to_json();
  merge_strict(j, user, "");

  RunConfig c;
  section("data", [&] {
    c.data.path = j["data"]["path"].get<std::string>();
    c.data.columns = columns_from_json(j["data"]["columns"]);
    c.data.time_shift_epsilon = j["data"]["time_shift_epsilon"].get<double>();
    return 0;
  });
  section("split", [&] {
    const auto fr = j["split"]["fractions"].get<std::vector<double>>();
    if (fr.size() != 3) throw ValidationError("fractions must have three entries");
    std::copy(fr.begin(), fr.end(), c.split.fractions.begin());
    c.split.seed = j["split"]["seed"].get<std::uint64_t>();
    return 0;
  });
  section("target", [&] {
    c.target_mode = target_mode_from_string(j["target"]["mode"].get<std::string>());
    return 0;
  });
  section("schedule", [&] {
    c.schedule.steps = j["schedule"]["steps"].get<std::size_t>();
    c.schedule.offset = j["schedule"]["offset"].get<double>();
    return 0;
  });
  c.network = section("network", [&] { return NetConfig::from_json(j["network"]); });
  c.training = section("training", [&] { return TrainConfig::from_json(j["training"]); });
  section("sampler", [&] {
    c.sampler.samples = j["sampler"]["samples"].get<std::size_t>();
    const auto& r = j["sampler"]["inference_steps"];
    if (!r.is_null()) c.sampler.inference_steps = r.get<std::size_t>();
    c.sampler.threads = j["sampler"]["threads"].get<std::size_t>();
    const auto& m = j["sampler"]["clip_margin"];
    c.sampler.clip_margin = m.is_null() ? std::nullopt : std::optional<double>(m.get<double>());
    return 0;
  });
  section("metrics", [&] {
    c.metrics.censoring_floor = j["metrics"]["censoring_floor"].get<double>();
    c.metrics.grid_include_censored = j["metrics"]["grid_include_censored"].get<bool>();
    return 0;
  });
  section("seed", [&] {
    c.seed = j["seed"].get<std::uint64_t>();
    return 0;
  });
  c.validate();
  return c;
}

std::string RunConfig::canonical() const { return to_json().dump(2) + "\n"; }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  return RunConfig::from_json(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> outside_search_space(const RunConfig& cfg) {
  std::vector<std::string> bad;
  const auto one_of = [](auto v, std::initializer_list<decltype(v)> set) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  const auto& t = cfg.training;
  const auto& n = cfg.network;
  if (!one_of(t.batch_size, {32, 64, 128})) bad.push_back("training.batch_size");
  if (!(t.learning_rate >= 1e-4 && t.learning_rate <= 5e-3)) bad.push_back("training.learning_rate");
  if (!one_of(t.weight_decay, {0.0, 1e-6, 1e-5, 1e-4})) bad.push_back("training.weight_decay");
  if (t.epochs != 1000) bad.push_back("training.epochs");
  if (!(n.dropout == 0.0 || (n.dropout >= 0.05 && n.dropout <= 0.25))) bad.push_back("network.dropout");
  if (!one_of(n.hidden_layers, {2, 3, 4, 5})) bad.push_back("network.hidden_layers");
  if (!one_of(n.hidden_dim, {64, 128, 256, 512})) bad.push_back("network.hidden_dim");
  if (!one_of(n.fourier_frequencies, {8, 16, 32, 64})) bad.push_back("network.fourier_frequencies");
  if (!(n.fourier_init_scale >= 0.01 && n.fourier_init_scale <= 1.0)) bad.push_back("network.fourier_init_scale");
  if (n.categorical == CategoricalMode::Embedding && !one_of(n.categorical_embed_dim, {4, 8})) {
    bad.push_back("network.categorical_embed_dim");
  }
  if (!one_of(n.step_embed_dim, {8, 16})) bad.push_back("network.step_embed_dim");
  if (!one_of(cfg.schedule.steps, {10, 20, 30})) bad.push_back("schedule.steps");
  if (!(cfg.schedule.offset >= 1e-4 && cfg.schedule.offset <= 0.15)) bad.push_back("schedule.offset");
  return bad;
}

}  // namespace sdpm
