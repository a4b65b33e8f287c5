#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssde/allocation.hpp"
#include "ssde/checkpoint.hpp"
#include "ssde/config.hpp"
#include "ssde/envs.hpp"
#include "ssde/metrics.hpp"

namespace ssde {

/// 0 = quiet, 1 = per task (default), 2 = per eval. Read from SSDE_LOG_LEVEL.
int log_level();

std::vector<TaskSpec> make_suite(const RunConfig& cfg);
NetworkShape actor_shape(const RunConfig& cfg);

/// One embedding per task of the suite, from the hashed embedder or the
/// configured file (rows matched by task id modulo the base suite size).
std::vector<TaskEmbedding> suite_embeddings(const RunConfig& cfg, const std::vector<TaskSpec>& suite);

struct AllocationReport {
  std::vector<MaskSet> masks;
  std::vector<double> seconds;  // wall clock per task
  double total_seconds = 0.0;
};

/// The allocation pipeline alone: no environment, no networks.
AllocationReport allocate_only(const RunConfig& cfg);

/// Text manifest: one `task layer bits` line per hidden layer.
std::string mask_manifest(const std::vector<MaskSet>& masks);

struct RunOptions {
  bool resume = false;
  /// Stop after this many completed tasks (simulates an interruption).
  std::optional<int> stop_after;
  /// Compute FT against cached single-task baselines.
  bool with_baselines = false;
};

struct TaskDiagnostics {
  int task_id = 0;
  int64_t reset_events = 0;
  int64_t reset_coordinates = 0;
  int64_t updates = 0;
  int64_t clipped_actions = 0;
  double alloc_seconds = 0.0;
  double train_seconds = 0.0;
  double utilization = 0.0;  // after commit
};

struct RunArtifacts {
  std::vector<EvalCurve> curves;
  std::vector<MaskSet> masks;
  std::vector<TaskDiagnostics> diagnostics;  // tasks trained by this invocation
  std::optional<MetricsResult> metrics;      // set once every task is done
  int tasks_done = 0;
  bool complete = false;
};

/// The full task sequence. Writes into cfg.out: config.resolved, eval.csv,
/// masks.txt, train_task<k>.csv, dormant_task<k>.csv, diagnostics.csv,
/// checkpoint.bin after every task and metrics.csv at the end.
RunArtifacts run_sequence(const RunConfig& cfg, const RunOptions& opt = {});

/// Actor view of a completed task from a checkpoint: its masks over its
/// pre-task frozen snapshot, at the stored beta.
MaskedForward<float> task_view(const Checkpoint& ckpt, int task_index);

/// Re-evaluates every completed task of a checkpoint.
std::vector<double> evaluate_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg);

/// Single-task from-scratch curve on [0, steps_per_task]: fresh actor bound to
/// the task's own masks with nothing frozen, dormant resets off. Cached in
/// cfg.baseline_cache keyed by task spec hash, SAC hash and the run settings.
EvalCurve baseline_curve(const RunConfig& cfg, const TaskSpec& spec, const MaskSet& masks);
std::filesystem::path baseline_cache_path(const RunConfig& cfg, const TaskSpec& spec, const MaskSet& masks);

struct SweepRow {
  std::string label;
  double value = 0.0;
  double P = 0.0;
  double F = 0.0;
  double FT = 0.0;
  std::string error;  // non-empty when the arm failed
};

/// One run per value of `parameter` ("beta" or "tau"), shared seeds. Arms
/// write under cfg.out/<parameter>_<value>. A failing arm is reported in its
/// row and the others still run.
std::vector<SweepRow> sweep(const RunConfig& cfg, const std::string& parameter, const std::vector<double>& values,
                            bool with_baselines = false);
void write_sweep_csv(const std::filesystem::path& path, const std::string& parameter,
                     const std::vector<SweepRow>& rows);

/// Ablation arms as config toggles: full, no_beta, no_dormant, global_only, redo.
const std::vector<std::string>& ablation_arms();
RunConfig apply_arm(RunConfig cfg, const std::string& arm);

struct AblationRow {
  std::string arm;
  uint64_t seed = 0;
  double P = 0.0;
  double F = 0.0;
  double FT = 0.0;
  std::string error;
};

struct AblationSummary {
  std::string arm;
  double mean_P = 0.0;
  double mean_F = 0.0;
  double mean_FT = 0.0;
  int runs = 0;
};

std::vector<AblationRow> ablation(const RunConfig& cfg, const std::vector<std::string>& arms,
                                  const std::vector<uint64_t>& seeds, bool with_baselines = false);
std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

/// Per-task per-layer mask files plus all-pairs similarity matrices (one per
/// hidden layer and one for the layer mean).
void export_masks(const Checkpoint& ckpt, const std::filesystem::path& dir);
/// Reads a mask file written by export_masks.
BitVector read_mask_file(const std::filesystem::path& path);
std::vector<std::vector<double>> read_similarity_csv(const std::filesystem::path& path);

}  // namespace ssde
