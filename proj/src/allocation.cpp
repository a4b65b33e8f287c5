#include "ssde/allocation.hpp"

#include <cmath>
#include <string>

#include "ssde/errors.hpp"
#include "ssde/rng.hpp"

namespace ssde {

uint64_t local_dictionary_seed(uint64_t global_seed, int task_id, int layer_index) {
  return derive_seed(global_seed, static_cast<uint64_t>(task_id), static_cast<uint64_t>(layer_index));
}

MaskSet allocate_task(const TaskEmbedding& e, const AllocationConfig& cfg,
                      std::span<const int> widths) {
  if (widths.size() < 3) throw invalid_input("allocation needs at least one hidden layer");
  if (!(cfg.lambda_global > 0.0) || !(cfg.lambda_local > 0.0))
    throw config_error("allocation lambdas must be > 0");
  const int L = static_cast<int>(widths.size()) - 1;
  const int m = static_cast<int>(e.dim());

  MaskSet out;
  out.task_id = e.task_id;
  out.phi.resize(static_cast<std::size_t>(L + 1));
  out.phi_global.resize(static_cast<std::size_t>(L + 1));
  out.phi_local.resize(static_cast<std::size_t>(L + 1));
  out.local_seeds.assign(static_cast<std::size_t>(L + 1), 0);
  out.phi[0] = BitVector::ones(static_cast<std::size_t>(widths[0]));
  out.phi[static_cast<std::size_t>(L)] = BitVector::ones(static_cast<std::size_t>(widths[static_cast<std::size_t>(L)]));

  for (int l = 1; l < L; ++l) {
    const int n = widths[static_cast<std::size_t>(l)];
    const auto global = make_dictionary(cfg.global_seed, m, n, DictionaryKind::global, l);
    BitVector phi_g = binarize(solve_lasso_lars(global, e, cfg.lambda_global), cfg.epsilon, l).bits;

    BitVector phi_l(static_cast<std::size_t>(n));
    if (cfg.use_local) {
      const uint64_t seed = local_dictionary_seed(cfg.global_seed, e.task_id, l);
      const auto local = make_dictionary(seed, m, n, DictionaryKind::task_local, l, e.task_id);
      phi_l = binarize(solve_lasso_lars(local, e, cfg.lambda_local), cfg.epsilon, l).bits;
      out.local_seeds[static_cast<std::size_t>(l)] = seed;
    }

    BitVector phi = phi_g | phi_l;
    if (phi.none())
      throw allocation_error("task " + std::to_string(e.task_id) + " layer " + std::to_string(l) +
                             ": empty neuron mask; lower lambda");
    out.phi[static_cast<std::size_t>(l)] = std::move(phi);
    out.phi_global[static_cast<std::size_t>(l)] = std::move(phi_g);
    out.phi_local[static_cast<std::size_t>(l)] = std::move(phi_l);
  }
  return out;
}

BitMatrix param_mask(const BitVector& phi_l, const BitVector& phi_lm1) {
  return BitMatrix::outer(phi_l, phi_lm1);
}

std::vector<BitMatrix> param_masks(const MaskSet& masks) {
  std::vector<BitMatrix> out;
  out.reserve(static_cast<std::size_t>(masks.layers()));
  for (int l = 1; l <= masks.layers(); ++l)
    out.push_back(param_mask(masks.phi[static_cast<std::size_t>(l)], masks.phi[static_cast<std::size_t>(l - 1)]));
  return out;
}

std::vector<BitMatrix> frozen_union(std::span<const std::vector<BitMatrix>> archive,
                                    std::span<const int> widths) {
  std::vector<BitMatrix> out;
  for (std::size_t l = 1; l < widths.size(); ++l)
    out.emplace_back(static_cast<std::size_t>(widths[l]), static_cast<std::size_t>(widths[l - 1]));
  for (const auto& task : archive) {
    if (task.size() != out.size()) throw invalid_input("frozen_union: layer count mismatch");
    for (std::size_t l = 0; l < out.size(); ++l) out[l] |= task[l];
  }
  return out;
}

FrozenSnapshot empty_snapshot(std::span<const int> widths) {
  FrozenSnapshot s;
  s.weights = frozen_union({}, widths);
  for (std::size_t l = 1; l < widths.size(); ++l) s.bias.emplace_back(static_cast<std::size_t>(widths[l]));
  return s;
}

FrozenLedger::FrozenLedger(std::vector<int> widths)
    : widths_(std::move(widths)), current_(empty_snapshot(widths_)) {}

void FrozenLedger::commit(const MaskSet& masks) {
  if (masks.layers() + 1 != static_cast<int>(widths_.size()))
    throw invalid_input("ledger commit: layer count mismatch");
  auto psi = param_masks(masks);
  pre_task_.push_back(current_);
  for (std::size_t l = 0; l < psi.size(); ++l) {
    current_.weights[l] |= psi[l];
    current_.bias[l] |= masks.phi[l + 1];
  }
  archive_.push_back(std::move(psi));
}

std::size_t FrozenLedger::total_weights() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l)
    n += static_cast<std::size_t>(widths_[l]) * static_cast<std::size_t>(widths_[l - 1]);
  return n;
}

std::size_t FrozenLedger::frozen_weights() const {
  std::size_t n = 0;
  for (const auto& w : current_.weights) n += w.popcount();
  return n;
}

double utilization(const FrozenLedger& ledger) {
  const auto total = ledger.total_weights();
  if (total == 0) return 0.0;
  return static_cast<double>(ledger.frozen_weights()) / static_cast<double>(total);
}

double bit_cosine(const BitVector& a, const BitVector& b) {
  const auto na = a.popcount();
  const auto nb = b.popcount();
  if (na == 0 || nb == 0) return 0.0;
  const auto both = (a & b).popcount();
  return static_cast<double>(both) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
}

double mask_similarity(const MaskSet& a, const MaskSet& b, int layer) {
  if (a.layers() != b.layers()) throw invalid_input("mask_similarity: layer count mismatch");
  if (layer != kMeanLayer) {
    if (layer < 0 || layer > a.layers()) throw invalid_input("mask_similarity: bad layer");
    return bit_cosine(a.phi[static_cast<std::size_t>(layer)], b.phi[static_cast<std::size_t>(layer)]);
  }
  double sum = 0.0;
  for (int l = 1; l < a.layers(); ++l) sum += bit_cosine(a.phi[static_cast<std::size_t>(l)], b.phi[static_cast<std::size_t>(l)]);
  return sum / static_cast<double>(a.layers() - 1);
}

std::vector<double> hidden_density(const MaskSet& masks) {
  std::vector<double> out;
  for (int l = 1; l < masks.layers(); ++l) {
    const auto& p = masks.phi[static_cast<std::size_t>(l)];
    out.push_back(static_cast<double>(p.popcount()) / static_cast<double>(p.size()));
  }
  return out;
}

}  // namespace ssde
