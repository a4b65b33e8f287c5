#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssde/allocation.hpp"
#include "ssde/masked_net.hpp"
#include "ssde/metrics.hpp"

namespace ssde {

inline constexpr uint32_t kCheckpointVersion = 1;

/// Self-contained state after a completed task: enough to re-evaluate any
/// finished task bit-exactly and to continue the sequence.
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t config_hash = 0;
  std::string config_text;
  int tasks_done = 0;
  int64_t global_step = 0;
  double beta = 0.0;
  uint64_t run_seed = 0;
  uint64_t actor_seed = 0;
  uint64_t eval_seed = 0;
  uint64_t alloc_seed = 0;
  uint64_t embed_seed = 0;
  NetworkShape actor_shape;
  std::vector<MaskSet> masks;                    // one per finished task
  std::vector<std::vector<BitMatrix>> archive;   // Psi~ per task and layer
  Params<float> actor_params;
  Params<float> actor_init;
  std::vector<EvalCurve> curves;

  /// The frozen ledger rebuilt from the archived masks.
  FrozenLedger ledger() const;
};

/// Little-endian binary: "SSDE", u32 version, then tagged arrays. Written to
/// a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws format errors on bad magic, unknown version, truncation or
/// internally inconsistent content.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ssde
