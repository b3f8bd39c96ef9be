#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace sdpm {

inline constexpr const char* kMissingCategory = "__missing__";

enum class ColumnKind { Numeric, Categorical, Time, Event };

const char* to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  // Categorical only. Filled by Preprocessor::fit; kMissingCategory is
  // appended last when a missing value was seen.
  std::vector<std::string> categories;
};

struct NumericStats {
  double mean = 0.0;
  double std = 1.0;
  bool constant = false;
};

// Where each declared feature column lands in the encoded feature matrix.
struct FeatureBlock {
  std::string name;
  ColumnKind kind;      // Numeric or Categorical
  std::size_t offset;   // first encoded column
  std::size_t width;    // 1 for numeric, category count for categorical
};

struct FeatureLayout {
  std::vector<FeatureBlock> blocks;
  std::size_t width() const;
  std::size_t numeric_count() const;
  std::size_t categorical_count() const;
};

// Rows as read from disk: raw feature strings, validated targets.
struct RawTable {
  std::vector<ColumnSpec> schema;
  std::vector<std::string> feature_names;  // schema order, features only
  std::vector<std::vector<std::optional<std::string>>> features;  // [row][feature]
  std::vector<double> times;
  std::vector<int> events;
  std::vector<std::size_t> source_lines;
  std::size_t dropped_rows = 0;
  bool has_targets = true;

  std::size_t size() const { return features.size(); }
};

struct LoadOptions {
  // Added to every time before validation (times must end up > 0).
  double time_shift_epsilon = 0.0;
  // Feature-only files (inference) may omit the time and event columns.
  bool require_targets = true;
};

// Validates the schema: exactly one time and one event column, unique names.
void validate_schema(const std::vector<ColumnSpec>& schema);

RawTable read_raw_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
                      const LoadOptions& options = {});

struct SurvivalDataset {
  Eigen::MatrixXd features;  // n x d, post-encoding
  std::vector<double> times;
  std::vector<int> events;
  std::vector<ColumnSpec> specs;
  std::vector<NumericStats> numeric_stats;  // one per numeric spec, schema order
  FeatureLayout layout;
  std::size_t dropped_rows = 0;
  std::vector<std::string> warnings;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  SurvivalDataset subset(std::span<const std::size_t> rows) const;
};

// Imputation, standardization and one-hot statistics, frozen from the rows it
// was fitted on and reused for every later transform.
class Preprocessor {
 public:
  Preprocessor() = default;
  static Preprocessor fit(const RawTable& table, std::span<const std::size_t> rows);
  static Preprocessor fit(const RawTable& table);

  SurvivalDataset transform(const RawTable& table, std::span<const std::size_t> rows) const;
  SurvivalDataset transform(const RawTable& table) const;

  const std::vector<ColumnSpec>& specs() const { return specs_; }
  const std::vector<NumericStats>& numeric_stats() const { return stats_; }
  FeatureLayout layout() const;
  // Stable hash of column names, kinds and category lists.
  std::uint64_t schema_hash() const;

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);

 private:
  std::vector<ColumnSpec> specs_;
  std::vector<NumericStats> stats_;
};

// Fits preprocessing on every row of the file and applies it.
SurvivalDataset load_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
                         const LoadOptions& options = {});
// Applies frozen statistics (inference path).
SurvivalDataset load_csv(const std::string& path, const Preprocessor& pre,
                         const LoadOptions& options = {});

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

using SplitFractions = std::array<double, 3>;

// Shuffles each event stratum with `seed` and partitions it by `fractions`.
SplitIndices stratified_split(std::span<const int> events, const SplitFractions& fractions,
                              std::uint64_t seed);
SplitIndices stratified_split(const SurvivalDataset& ds, const SplitFractions& fractions,
                              std::uint64_t seed);

double event_rate(std::span<const int> events);
double event_rate(const SurvivalDataset& ds);

}  // namespace sdpm
