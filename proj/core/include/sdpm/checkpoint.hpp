#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdpm/dataset.hpp"
#include "sdpm/denoiser.hpp"
#include "sdpm/schedule.hpp"
#include "sdpm/target_space.hpp"

namespace sdpm {

inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'P', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to sample and evaluate: preprocessing, target transform,
// schedule, network, and the training targets (for the time grid and G-hat).
struct Checkpoint {
  Preprocessor preprocessor;
  TargetTransform transform;
  DiffusionSchedule schedule;
  DenoiserNet net;
  std::vector<double> train_times;
  std::vector<int> train_events;
  nlohmann::json info = nlohmann::json::object();  // free-form run summary

  std::uint64_t schema_hash() const { return preprocessor.schema_hash(); }
};

// Layout (all integers little-endian):
//   magic[8] | u32 version | u32 section count |
//   sections: tag[4] | u64 byte length | payload
//   META: UTF-8 JSON; TENS: u32 count, then per tensor
//   u32 name length | name | u64 rows | u64 cols | rows*cols IEEE-754 f64
void save_checkpoint(const Checkpoint& ckpt, std::ostream& os);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::string& path);

// Human-readable summary: metadata plus a tensor table.
void describe_checkpoint(const Checkpoint& ckpt, std::ostream& os);

}  // namespace sdpm
