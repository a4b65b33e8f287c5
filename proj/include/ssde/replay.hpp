#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ssde/rng.hpp"

namespace ssde {

struct Transition {
  Eigen::VectorXf state;
  Eigen::VectorXf action;
  float reward = 0.0f;
  Eigen::VectorXf next_state;
  bool done = false;  // terminal: bootstrapping stops here
  bool success = false;
};

/// Column-major minibatch: one transition per column.
struct Batch {
  Eigen::MatrixXf states;
  Eigen::MatrixXf actions;
  Eigen::RowVectorXf rewards;
  Eigen::MatrixXf next_states;
  Eigen::RowVectorXf not_done;  // 1 - done
  std::vector<int64_t> indices;
};

/// Fixed-capacity ring buffer with uniform sampling without replacement
/// inside a batch.
class ReplayBuffer {
 public:
  ReplayBuffer(int64_t capacity, int state_dim, int action_dim, uint64_t seed);

  void add(const Transition& t);
  Batch sample(int batch);
  /// States only, drawn with an external stream so training samples are
  /// unaffected (n_state x batch).
  Eigen::MatrixXf sample_states(int batch, Rng& rng) const;
  void clear();

  int64_t size() const { return size_; }
  int64_t capacity() const { return capacity_; }
  int state_dim() const { return static_cast<int>(states_.rows()); }
  int action_dim() const { return static_cast<int>(actions_.rows()); }

 private:
  int64_t capacity_;
  int64_t size_ = 0;
  int64_t head_ = 0;
  Eigen::MatrixXf states_;
  Eigen::MatrixXf actions_;
  Eigen::RowVectorXf rewards_;
  Eigen::MatrixXf next_states_;
  Eigen::RowVectorXf not_done_;
  Rng rng_;
};

}  // namespace ssde
