#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssde/adam.hpp"
#include "ssde/masked_net.hpp"

namespace ssde {

enum class DormantVariant { sensitivity, redo, off };

struct DormantConfig {
  DormantVariant variant = DormantVariant::sensitivity;
  double tau = 0.6;
  int64_t reset_interval = 8000;
  int sample_batch = 256;
  double delta_scale = 0.01;
  int state_window = 1000;

  void validate() const;
  friend bool operator==(const DormantConfig&, const DormantConfig&) = default;
};

std::string to_string(DormantVariant v);
DormantVariant parse_dormant_variant(const std::string& s);

/// Most recent observations, capped at the configured window.
class StateHistory {
 public:
  explicit StateHistory(int window = 1000) : window_(window) {}

  void push(const Eigen::VectorXf& state);
  void clear() { states_.clear(); }
  std::size_t size() const { return states_.size(); }
  bool empty() const { return states_.empty(); }
  const std::deque<Eigen::VectorXf>& states() const { return states_; }

 private:
  int window_;
  std::deque<Eigen::VectorXf> states_;
};

/// delta = delta_scale * element-wise mean of the recorded states.
Eigen::VectorXf compute_delta(const StateHistory& history, double delta_scale);

struct LayerScores {
  int layer = 0;
  std::vector<int> neurons;     // active neuron indices
  std::vector<double> raw;      // per-neuron batch mean before normalization
  std::vector<double> scores;   // raw / mean(raw over active neurons)
  bool degenerate = false;      // all raw values zero; every score is 0
};

struct SensitivityReport {
  std::vector<LayerScores> layers;  // hidden layers 1..L-1
  int batch = 0;
};

struct NeuronRef {
  int layer = 0;
  int neuron = 0;
  friend bool operator==(const NeuronRef&, const NeuronRef&) = default;
};

/// Normalizes per-neuron statistics of one layer by their mean.
LayerScores normalize_layer(int layer, std::vector<int> neurons, std::vector<double> raw);

/// Sensitivity-guided score: mean |y_i(s) - y_i(s + delta)| over the batch,
/// divided by the same quantity averaged over the layer's active neurons.
/// states: n^(0) x batch.
SensitivityReport sensitivity_scores(const MaskedForward<float>& net, const Eigen::MatrixXf& states,
                                     const Eigen::VectorXf& delta);

/// Activation-magnitude score (ReDo-style): mean |y_i(s)| normalized the same way.
SensitivityReport redo_scores(const MaskedForward<float>& net, const Eigen::MatrixXf& states);

/// Active neurons with score <= tau that have at least one trainable incident
/// parameter. Degenerate layers are skipped when skip_degenerate is set.
std::vector<NeuronRef> find_dormant(const SensitivityReport& report, double tau,
                                    const Params<float>& trainable, bool skip_degenerate = false);

/// Resets every trainable parameter incident to each dormant neuron (incoming
/// row, outgoing column, bias) to its stored initial value and clears the
/// optimizer moments there. Returns the number of coordinates written.
std::size_t reset_dormant(Params<float>& params, const Params<float>& init_store,
                          const std::vector<NeuronRef>& dormant, const Params<float>& trainable,
                          Adam<float>* optimizer = nullptr);

struct InputGroup {
  std::string name;
  std::vector<int> indices;
};

using PolicyFn = std::function<Eigen::MatrixXf(const Eigen::MatrixXf&)>;

/// For each group, shifts only that group's coordinates by
/// delta_scale * |mean state| and reports the mean absolute action change.
std::vector<double> input_group_sensitivity(const PolicyFn& policy, const Eigen::MatrixXf& states,
                                            const std::vector<InputGroup>& groups, double delta_scale);

}  // namespace ssde
