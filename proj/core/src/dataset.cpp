#include "sdpm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "sdpm/csv.hpp"
#include "sdpm/errors.hpp"
#include "sdpm/rng.hpp"

namespace sdpm {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& s) {
  static const std::set<std::string> tokens = {"", "NA", "NaN", "nan", "NULL", "null", "?"};
  return tokens.count(s) > 0;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return v;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const char* to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Time: return "time";
    case ColumnKind::Event: return "event";
  }
  return "?";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "numeric") return ColumnKind::Numeric;
  if (s == "categorical") return ColumnKind::Categorical;
  if (s == "time") return ColumnKind::Time;
  if (s == "event") return ColumnKind::Event;
  throw ValidationError("unknown column kind '" + s + "'");
}

std::size_t FeatureLayout::width() const {
  std::size_t w = 0;
  for (const auto& b : blocks) w += b.width;
  return w;
}

std::size_t FeatureLayout::numeric_count() const {
  return static_cast<std::size_t>(std::count_if(
      blocks.begin(), blocks.end(), [](const auto& b) { return b.kind == ColumnKind::Numeric; }));
}

std::size_t FeatureLayout::categorical_count() const { return blocks.size() - numeric_count(); }

void validate_schema(const std::vector<ColumnSpec>& schema) {
  std::size_t n_time = 0, n_event = 0;
  std::set<std::string> names;
  for (const auto& c : schema) {
    if (c.name.empty()) throw ValidationError("schema: empty column name");
    if (!names.insert(c.name).second) throw ValidationError("schema: duplicate column '" + c.name + "'");
    n_time += c.kind == ColumnKind::Time;
    n_event += c.kind == ColumnKind::Event;
  }
  if (n_time != 1) throw ValidationError("schema: exactly one time column required");
  if (n_event != 1) throw ValidationError("schema: exactly one event column required");
}

RawTable read_raw_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
                      const LoadOptions& options) {
  validate_schema(schema);
  const csv::Table table = csv::read_file(path);

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < table.header.size(); ++i) col_of[trim(table.header[i])] = i;

  RawTable raw;
  raw.schema = schema;
  std::vector<std::size_t> feature_cols;
  std::optional<std::size_t> time_col, event_col;
  for (const auto& spec : schema) {
    auto it = col_of.find(spec.name);
    const bool is_target = spec.kind == ColumnKind::Time || spec.kind == ColumnKind::Event;
    if (it == col_of.end()) {
      if (is_target && !options.require_targets) continue;
      throw ValidationError(path + ": column '" + spec.name + "' not found in header");
    }
    if (spec.kind == ColumnKind::Time) {
      time_col = it->second;
    } else if (spec.kind == ColumnKind::Event) {
      event_col = it->second;
    } else {
      feature_cols.push_back(it->second);
      raw.feature_names.push_back(spec.name);
    }
  }
  raw.has_targets = time_col.has_value() && event_col.has_value();

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r];

    std::vector<std::optional<std::string>> feats;
    feats.reserve(feature_cols.size());
    bool any_present = false;
    for (std::size_t c : feature_cols) {
      std::string v = trim(row[c]);
      if (is_missing_token(v)) {
        feats.emplace_back(std::nullopt);
      } else {
        any_present = true;
        feats.emplace_back(std::move(v));
      }
    }
    if (!feature_cols.empty() && !any_present) {
      ++raw.dropped_rows;
      continue;
    }

    if (raw.has_targets) {
      const std::string ts = trim(row[*time_col]);
      if (is_missing_token(ts)) throw ParseError(line, "missing time value");
      auto t = parse_double(ts);
      if (!t || !std::isfinite(*t)) throw ParseError(line, "time is not a finite number: '" + ts + "'");
      const double shifted = *t + options.time_shift_epsilon;
      if (!(shifted > 0.0)) throw ParseError(line, "time must be positive, got " + ts);

      const std::string es = trim(row[*event_col]);
      auto e = parse_double(es);
      if (!e || (*e != 0.0 && *e != 1.0)) throw ParseError(line, "event must be 0 or 1, got '" + es + "'");
      raw.times.push_back(shifted);
      raw.events.push_back(static_cast<int>(*e));
    }
    raw.features.push_back(std::move(feats));
    raw.source_lines.push_back(line);
  }
  return raw;
}

SurvivalDataset SurvivalDataset::subset(std::span<const std::size_t> rows) const {
  SurvivalDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ValidationError("subset: row index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    if (!times.empty()) {
      out.times.push_back(times[rows[i]]);
      out.events.push_back(events[rows[i]]);
    }
  }
  out.specs = specs;
  out.numeric_stats = numeric_stats;
  out.layout = layout;
  return out;
}

Preprocessor Preprocessor::fit(const RawTable& table) {
  std::vector<std::size_t> all(table.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit(table, all);
}

Preprocessor Preprocessor::fit(const RawTable& table, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("cannot fit preprocessing on zero rows");
  Preprocessor p;
  p.specs_ = table.schema;
  std::size_t f = 0;
  for (auto& spec : p.specs_) {
    if (spec.kind == ColumnKind::Time || spec.kind == ColumnKind::Event) continue;
    if (spec.kind == ColumnKind::Numeric) {
      std::vector<double> values;
      values.reserve(rows.size());
      for (std::size_t r : rows) {
        const auto& cell = table.features[r][f];
        if (!cell) continue;
        auto v = parse_double(*cell);
        if (!v || !std::isfinite(*v)) {
          throw ParseError(table.source_lines[r], "column '" + spec.name + "': not a number: '" + *cell + "'");
        }
        values.push_back(*v);
      }
      NumericStats st;
      if (!values.empty()) {
        st.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        // Variance over the mean-imputed column: imputed cells contribute 0.
        double ss = 0.0;
        for (double v : values) ss += (v - st.mean) * (v - st.mean);
        st.std = std::sqrt(ss / static_cast<double>(rows.size()));
      } else {
        st.mean = 0.0;
        st.std = 0.0;
      }
      st.constant = !(st.std > 1e-12 * std::max(1.0, std::abs(st.mean)));
      if (st.constant) st.std = 0.0;
      p.stats_.push_back(st);
    } else {
      std::set<std::string> seen;
      bool missing = false;
      for (std::size_t r : rows) {
        const auto& cell = table.features[r][f];
        if (cell) seen.insert(*cell);
        else missing = true;
      }
      seen.erase(kMissingCategory);
      spec.categories.assign(seen.begin(), seen.end());
      if (missing) spec.categories.emplace_back(kMissingCategory);
    }
    ++f;
  }
  return p;
}

FeatureLayout Preprocessor::layout() const {
  FeatureLayout layout;
  std::size_t offset = 0;
  for (const auto& spec : specs_) {
    if (spec.kind == ColumnKind::Numeric) {
      layout.blocks.push_back({spec.name, spec.kind, offset, 1});
      offset += 1;
    } else if (spec.kind == ColumnKind::Categorical) {
      layout.blocks.push_back({spec.name, spec.kind, offset, spec.categories.size()});
      offset += spec.categories.size();
    }
  }
  return layout;
}

SurvivalDataset Preprocessor::transform(const RawTable& table) const {
  std::vector<std::size_t> all(table.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return transform(table, all);
}

SurvivalDataset Preprocessor::transform(const RawTable& table, std::span<const std::size_t> rows) const {
  SurvivalDataset ds;
  ds.specs = specs_;
  ds.numeric_stats = stats_;
  ds.layout = layout();
  ds.dropped_rows = table.dropped_rows;
  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                      static_cast<Eigen::Index>(ds.layout.width()));

  std::size_t numeric_idx = 0;
  std::size_t f = 0;
  for (const auto& block : ds.layout.blocks) {
    // Locate the matching raw column by name; transform-time tables may order
    // columns differently from the fitted schema.
    auto it = std::find(table.feature_names.begin(), table.feature_names.end(), block.name);
    if (it == table.feature_names.end()) throw ValidationError("column '" + block.name + "' missing from input");
    const auto raw_col = static_cast<std::size_t>(it - table.feature_names.begin());
    const auto col = static_cast<Eigen::Index>(block.offset);

    if (block.kind == ColumnKind::Numeric) {
      const NumericStats& st = stats_[numeric_idx++];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& cell = table.features[rows[i]][raw_col];
        double v = st.mean;
        if (cell) {
          auto parsed = parse_double(*cell);
          if (!parsed || !std::isfinite(*parsed)) {
            throw ParseError(table.source_lines[rows[i]],
                             "column '" + block.name + "': not a number: '" + *cell + "'");
          }
          v = *parsed;
        }
        ds.features(static_cast<Eigen::Index>(i), col) = st.constant ? 0.0 : (v - st.mean) / st.std;
      }
    } else {
      const auto& spec = *std::find_if(specs_.begin(), specs_.end(),
                                       [&](const ColumnSpec& s) { return s.name == block.name; });
      const auto& cats = spec.categories;
      const auto missing_it = std::find(cats.begin(), cats.end(), kMissingCategory);
      std::size_t unknown = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& cell = table.features[rows[i]][raw_col];
        auto pos = cats.end();
        if (cell) {
          pos = std::find(cats.begin(), cats.end(), *cell);
          if (pos == cats.end()) {
            ++unknown;
            pos = missing_it;
          }
        } else {
          pos = missing_it;
        }
        if (pos != cats.end()) {
          ds.features(static_cast<Eigen::Index>(i), col + (pos - cats.begin())) = 1.0;
        }
      }
      if (unknown > 0) {
        ds.warnings.push_back("column '" + block.name + "': " + std::to_string(unknown) +
                              " unseen category value(s) mapped to " +
                              (missing_it != cats.end() ? std::string(kMissingCategory)
                                                        : std::string("an all-zero block")));
      }
    }
    ++f;
  }

  if (table.has_targets) {
    for (std::size_t r : rows) {
      ds.times.push_back(table.times[r]);
      ds.events.push_back(table.events[r]);
    }
  }
  return ds;
}

std::uint64_t Preprocessor::schema_hash() const {
  std::string canon;
  for (const auto& s : specs_) {
    canon += s.name;
    canon += '|';
    canon += to_string(s.kind);
    canon += '|';
    for (const auto& c : s.categories) {
      canon += c;
      canon += '\x1f';
    }
    canon += '\x1e';
  }
  return fnv1a(canon);
}

nlohmann::json Preprocessor::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  std::size_t numeric_idx = 0;
  for (const auto& s : specs_) {
    nlohmann::json c = {{"name", s.name}, {"kind", to_string(s.kind)}};
    if (s.kind == ColumnKind::Categorical) c["categories"] = s.categories;
    if (s.kind == ColumnKind::Numeric) {
      const auto& st = stats_[numeric_idx++];
      c["mean"] = st.mean;
      c["std"] = st.std;
      c["constant"] = st.constant;
    }
    cols.push_back(std::move(c));
  }
  return {{"columns", cols}};
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  for (const auto& c : j.at("columns")) {
    ColumnSpec s;
    s.name = c.at("name").get<std::string>();
    s.kind = column_kind_from_string(c.at("kind").get<std::string>());
    if (s.kind == ColumnKind::Categorical) s.categories = c.at("categories").get<std::vector<std::string>>();
    if (s.kind == ColumnKind::Numeric) {
      p.stats_.push_back({c.at("mean").get<double>(), c.at("std").get<double>(), c.at("constant").get<bool>()});
    }
    p.specs_.push_back(std::move(s));
  }
  validate_schema(p.specs_);
  return p;
}

SurvivalDataset load_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
                         const LoadOptions& options) {
  RawTable raw = read_raw_csv(path, schema, options);
  return Preprocessor::fit(raw).transform(raw);
}

SurvivalDataset load_csv(const std::string& path, const Preprocessor& pre, const LoadOptions& options) {
  std::vector<ColumnSpec> schema = pre.specs();
  for (auto& s : schema) s.categories.clear();
  RawTable raw = read_raw_csv(path, schema, options);
  return pre.transform(raw);
}

SplitIndices stratified_split(std::span<const int> events, const SplitFractions& fractions,
                              std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ValidationError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  if (!(fractions[0] > 0.0)) throw ValidationError("train fraction must be positive");

  std::array<std::vector<std::size_t>, 3> parts;
  std::size_t allocated_rows = 0;
  for (int stratum : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i] == stratum) members.push_back(i);
    }
    if (members.empty()) continue;
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(stratum));
    std::shuffle(members.begin(), members.end(), rng.engine());

    // Largest-remainder allocation of the stratum across the three parts.
    const double n = static_cast<double>(members.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double exact = fractions[k] * n;
      counts[k] = static_cast<std::size_t>(std::floor(exact));
      remainders[k] = exact - std::floor(exact);
      assigned += counts[k];
    }
    // Equal remainders go to the part furthest below its share of the rows
    // allocated so far.
    const auto deficit = [&](std::size_t k) {
      return fractions[k] * static_cast<double>(allocated_rows) - static_cast<double>(parts[k].size());
    };
    while (assigned < members.size()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 3; ++k) {
        if (remainders[k] > remainders[best] ||
            (remainders[k] == remainders[best] && deficit(k) > deficit(best))) {
          best = k;
        }
      }
      ++counts[best];
      remainders[best] = -1.0;
      ++assigned;
    }
    static constexpr const char* names[] = {"train", "validation", "test"};
    for (std::size_t k = 0; k < 3; ++k) {
      if (fractions[k] > 0.0 && counts[k] == 0) {
        throw ValidationError(std::string("stratum ") + (stratum == 1 ? "'event' (delta=1)" : "'censored' (delta=0)") +
                              " has " + std::to_string(members.size()) + " rows, too few for a non-empty " +
                              names[k] + " part");
      }
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      parts[k].insert(parts[k].end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                      members.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
      pos += counts[k];
    }
    allocated_rows += members.size();
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

SplitIndices stratified_split(const SurvivalDataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  return stratified_split(std::span<const int>(ds.events), fractions, seed);
}

double event_rate(std::span<const int> events) {
  if (events.empty()) throw ValidationError("event_rate: empty dataset");
  double s = 0.0;
  for (int e : events) s += e;
  return s / static_cast<double>(events.size());
}

double event_rate(const SurvivalDataset& ds) { return event_rate(std::span<const int>(ds.events)); }

}  // namespace sdpm
