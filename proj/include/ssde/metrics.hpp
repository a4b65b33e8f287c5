#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace ssde {

struct EvalSample {
  int64_t step = 0;
  double rate = 0.0;
  friend bool operator==(const EvalSample&, const EvalSample&) = default;
};

/// Success rate of one task over global steps, read as a step function:
/// the last evaluation is carried forward until the next one.
struct EvalCurve {
  int task_id = 0;
  std::vector<EvalSample> samples;

  void validate() const;
  void add(int64_t step, double rate);
  /// Value at t; throws if the curve has no sample at or before t.
  double at(int64_t t) const;

  friend bool operator==(const EvalCurve&, const EvalCurve&) = default;
};

/// Mean over tasks of p_k(t).
double average_performance(const std::vector<EvalCurve>& curves, int64_t t);

/// (1/N) sum_k [p_k(k delta) - p_k(N delta)] for curves in task order.
double forgetting(const std::vector<EvalCurve>& curves, int64_t delta, int n);

/// Normalized area of the step-carried curve over [begin, end].
double area_under_curve(const EvalCurve& curve, int64_t begin, int64_t end);

struct TransferResult {
  int task_id = 0;
  double auc = 0.0;
  double auc_baseline = 0.0;
  double ft = 0.0;
  bool defined = true;  // false when the baseline area is 1
};

/// FT = (AUC - AUC_b) / (1 - AUC_b); AUC over [window_start, window_start + delta]
/// of the continual curve, AUC_b over [0, delta] of the baseline.
TransferResult forward_transfer(const EvalCurve& curve, const EvalCurve& baseline, int64_t delta,
                                int64_t window_start);

struct MetricsResult {
  double P = 0.0;
  double F = 0.0;
  std::vector<TransferResult> transfer;  // empty without baselines
  double mean_ft = 0.0;                  // over defined entries; NaN if none
  int64_t delta = 0;
  int tasks = 0;
};

/// P and F at the end of the sequence; FT when baselines (one per task, same
/// order) are given.
MetricsResult compute_metrics(const std::vector<EvalCurve>& curves, int64_t delta,
                              const std::optional<std::vector<EvalCurve>>& baselines = std::nullopt);

/// CSV with columns global_step,task_id,success_rate.
void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalCurve>& curves);
std::vector<EvalCurve> read_eval_csv(const std::filesystem::path& path);

/// Per-task rows (task_id,AUC,AUC_b,FT) followed by a summary line.
void write_metrics_csv(const std::filesystem::path& path, const MetricsResult& m);

}  // namespace ssde
