#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssde/bits.hpp"
#include "ssde/embedding.hpp"
#include "ssde/sparse_coding.hpp"

namespace ssde {

struct AllocationConfig {
  double lambda_global = 1e-3;
  double lambda_local = 1e-3;
  double epsilon = kDefaultBinarizeEpsilon;
  uint64_t global_seed = 0;
  /// false = global-only allocation (the "w/o fine-grained" arm).
  bool use_local = true;
  friend bool operator==(const AllocationConfig&, const AllocationConfig&) = default;
};

/// Neuron masks of one task for layers 0..L. phi[0] and phi[L] are all ones;
/// the component masks are empty vectors at those two positions.
struct MaskSet {
  int task_id = 0;
  std::vector<BitVector> phi;
  std::vector<BitVector> phi_global;
  std::vector<BitVector> phi_local;
  /// Seeds of the task-local dictionaries per layer (0 where unused).
  std::vector<uint64_t> local_seeds;

  int layers() const { return static_cast<int>(phi.size()) - 1; }
  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// Seed of the task-local dictionary of (task, layer).
uint64_t local_dictionary_seed(uint64_t global_seed, int task_id, int layer_index);

/// Co-allocates neuron masks for every hidden layer from the task embedding:
/// a Lasso code against the shared dictionary OR a Lasso code against a
/// task-local dictionary. Uses no RL data. Throws allocation errors when a
/// hidden layer ends up with no active neuron.
MaskSet allocate_task(const TaskEmbedding& e, const AllocationConfig& cfg,
                      std::span<const int> widths);

/// Outer product of two neuron masks: bits[p][q] = phi_l[p] AND phi_lm1[q].
BitMatrix param_mask(const BitVector& phi_l, const BitVector& phi_lm1);

/// Parameter masks of all layers 1..L (vector index l-1).
std::vector<BitMatrix> param_masks(const MaskSet& masks);

/// Element-wise OR over an ordered archive of per-task parameter masks.
/// An empty archive yields all-zero matrices of the given widths.
std::vector<BitMatrix> frozen_union(std::span<const std::vector<BitMatrix>> archive,
                                    std::span<const int> widths);

/// Frozen state seen by one task: weight mask Psi_{k-1} per layer and
/// neuron-level frozen bias bits per layer (vector index l-1).
struct FrozenSnapshot {
  std::vector<BitMatrix> weights;
  std::vector<BitVector> bias;

  friend bool operator==(const FrozenSnapshot&, const FrozenSnapshot&) = default;
};

FrozenSnapshot empty_snapshot(std::span<const int> widths);

/// Cumulative record of what completed tasks trained. Only `commit` mutates it.
class FrozenLedger {
 public:
  FrozenLedger() = default;
  explicit FrozenLedger(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  int tasks() const { return static_cast<int>(archive_.size()); }

  /// Psi_{k-1}: the state before the next task trains.
  const FrozenSnapshot& current() const { return current_; }

  /// Archives the task's parameter masks and freezes them.
  void commit(const MaskSet& masks);

  const std::vector<std::vector<BitMatrix>>& archive() const { return archive_; }
  /// Pre-task snapshot of task index i (0-based within the ledger).
  const FrozenSnapshot& pre_task(int i) const { return pre_task_.at(static_cast<std::size_t>(i)); }

  std::size_t total_weights() const;
  std::size_t frozen_weights() const;

  friend bool operator==(const FrozenLedger&, const FrozenLedger&) = default;

 private:
  std::vector<int> widths_;
  FrozenSnapshot current_;
  std::vector<std::vector<BitMatrix>> archive_;
  std::vector<FrozenSnapshot> pre_task_;
};

/// Fraction of weights trained by any committed task.
double utilization(const FrozenLedger& ledger);

/// Cosine between two bit vectors; 0 if either is empty.
double bit_cosine(const BitVector& a, const BitVector& b);

inline constexpr int kMeanLayer = -1;

/// Cosine similarity of the neuron masks at `layer`, or the average over
/// hidden layers for kMeanLayer.
double mask_similarity(const MaskSet& a, const MaskSet& b, int layer = kMeanLayer);

/// Fraction of set bits per hidden layer (vector index l-1 for l = 1..L-1).
std::vector<double> hidden_density(const MaskSet& masks);

}  // namespace ssde
