#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssde/allocation.hpp"
#include "ssde/dormant.hpp"
#include "ssde/sac.hpp"

namespace ssde {

/// Everything a run depends on. Serialized as flat `key = value` lines;
/// unknown keys are rejected.
struct RunConfig {
  // Task suite.
  int tasks = 10;
  uint64_t suite_seed = 7;
  int repeats = 1;

  // Embeddings: hashed bag-of-words unless a precomputed file is given.
  int embed_dim = 64;
  uint64_t embed_seed = 0;
  std::string embed_file;

  AllocationConfig alloc{1e-3, 1e-3, 1e-12, 2024, true};
  double beta = 0.3;
  DormantConfig dormant;
  SacConfig sac;

  int64_t steps_per_task = 60000;
  int64_t eval_interval = 2000;
  int eval_episodes = 10;
  int64_t log_interval = 1000;

  uint64_t seed = 1;
  std::string out = "runs/default";
  std::string baseline_cache = "runs/baselines";

  void validate() const;
  /// Canonical text, one `key = value` per line, fixed key order.
  std::string to_text() const;
  /// Hash of every result-relevant field (excludes output paths).
  uint64_t hash() const;

  uint64_t actor_seed() const;
  uint64_t eval_seed() const;
  uint64_t task_seed(int task_index) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Applies `key = value` lines (with # comments) on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Sets one key; throws config errors for unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

std::string hex64(uint64_t v);

}  // namespace ssde
