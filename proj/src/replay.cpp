#include "ssde/replay.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ssde/errors.hpp"

namespace ssde {

ReplayBuffer::ReplayBuffer(int64_t capacity, int state_dim, int action_dim, uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  if (capacity < 1) throw config_error("replay capacity must be >= 1");
  if (state_dim < 1 || action_dim < 1) throw invalid_input("replay dimensions must be positive");
  states_.resize(state_dim, capacity);
  actions_.resize(action_dim, capacity);
  rewards_.resize(capacity);
  next_states_.resize(state_dim, capacity);
  not_done_.resize(capacity);
}

void ReplayBuffer::add(const Transition& t) {
  if (t.state.size() != states_.rows() || t.next_state.size() != states_.rows() ||
      t.action.size() != actions_.rows())
    throw invalid_input("transition shape does not match the buffer");
  if (!std::isfinite(t.reward)) throw invalid_input("transition reward is not finite");
  states_.col(head_) = t.state;
  actions_.col(head_) = t.action;
  rewards_[head_] = t.reward;
  next_states_.col(head_) = t.next_state;
  not_done_[head_] = t.done ? 0.0f : 1.0f;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(int batch) {
  if (batch < 1) throw invalid_input("batch must be >= 1");
  if (batch > size_) throw contract_violation("replay holds fewer transitions than the batch");
  // Floyd's algorithm: `batch` distinct indices from [0, size).
  std::vector<int64_t> idx;
  idx.reserve(static_cast<std::size_t>(batch));
  std::unordered_set<int64_t> chosen;
  chosen.reserve(static_cast<std::size_t>(batch) * 2);
  for (int64_t j = size_ - batch; j < size_; ++j) {
    const auto r = static_cast<int64_t>(rng_.below(static_cast<uint64_t>(j + 1)));
    const int64_t pick = chosen.count(r) ? j : r;
    chosen.insert(pick);
    idx.push_back(pick);
  }

  Batch b;
  b.states.resize(states_.rows(), batch);
  b.actions.resize(actions_.rows(), batch);
  b.rewards.resize(batch);
  b.next_states.resize(states_.rows(), batch);
  b.not_done.resize(batch);
  for (int i = 0; i < batch; ++i) {
    const int64_t k = idx[static_cast<std::size_t>(i)];
    b.states.col(i) = states_.col(k);
    b.actions.col(i) = actions_.col(k);
    b.rewards[i] = rewards_[k];
    b.next_states.col(i) = next_states_.col(k);
    b.not_done[i] = not_done_[k];
  }
  b.indices = std::move(idx);
  return b;
}

Eigen::MatrixXf ReplayBuffer::sample_states(int batch, Rng& rng) const {
  if (size_ == 0) throw contract_violation("replay buffer is empty");
  const int n = static_cast<int>(std::min<int64_t>(batch, size_));
  Eigen::MatrixXf out(states_.rows(), n);
  for (int i = 0; i < n; ++i) out.col(i) = states_.col(static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(size_))));
  return out;
}

void ReplayBuffer::clear() {
  size_ = 0;
  head_ = 0;
}

}  // namespace ssde
