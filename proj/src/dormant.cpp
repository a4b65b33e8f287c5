#include "ssde/dormant.hpp"

#include <cmath>

#include "ssde/errors.hpp"

namespace ssde {

void DormantConfig::validate() const {
  if (!(tau >= 0.0)) throw config_error("dormant tau must be >= 0");
  if (reset_interval <= 0) throw config_error("dormant reset interval must be > 0");
  if (sample_batch < 1) throw config_error("dormant sample batch must be >= 1");
  if (!(delta_scale >= 0.0)) throw config_error("dormant delta scale must be >= 0");
  if (state_window < 1) throw config_error("dormant state window must be >= 1");
}

std::string to_string(DormantVariant v) {
  switch (v) {
    case DormantVariant::sensitivity: return "sensitivity";
    case DormantVariant::redo: return "redo";
    case DormantVariant::off: return "off";
  }
  return "?";
}

DormantVariant parse_dormant_variant(const std::string& s) {
  if (s == "sensitivity") return DormantVariant::sensitivity;
  if (s == "redo") return DormantVariant::redo;
  if (s == "off") return DormantVariant::off;
  throw config_error("unknown dormant variant '" + s + "'");
}

void StateHistory::push(const Eigen::VectorXf& state) {
  states_.push_back(state);
  while (static_cast<int>(states_.size()) > window_) states_.pop_front();
}

Eigen::VectorXf compute_delta(const StateHistory& history, double delta_scale) {
  if (history.empty()) throw contract_violation("compute_delta on an empty state history");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(history.states().front().size());
  for (const auto& s : history.states()) sum += s.cast<double>();
  return (delta_scale * sum / static_cast<double>(history.size())).cast<float>();
}

LayerScores normalize_layer(int layer, std::vector<int> neurons, std::vector<double> raw) {
  LayerScores ls;
  ls.layer = layer;
  ls.neurons = std::move(neurons);
  ls.raw = std::move(raw);
  ls.scores.assign(ls.raw.size(), 0.0);
  double mean = 0.0;
  for (double r : ls.raw) mean += r;
  if (!ls.raw.empty()) mean /= static_cast<double>(ls.raw.size());
  if (!(mean > 0.0)) {
    ls.degenerate = true;
    return ls;
  }
  for (std::size_t i = 0; i < ls.raw.size(); ++i) ls.scores[i] = ls.raw[i] / mean;
  return ls;
}

namespace {

void check_batch(const MaskedForward<float>& net, const Eigen::MatrixXf& states) {
  if (states.cols() < 1) throw invalid_input("dormant scoring needs at least one state");
  if (states.rows() != net.shape().input_dim()) throw invalid_input("dormant scoring: state dimension mismatch");
}

}  // namespace

SensitivityReport sensitivity_scores(const MaskedForward<float>& net, const Eigen::MatrixXf& states,
                                     const Eigen::VectorXf& delta) {
  check_batch(net, states);
  if (delta.size() != states.rows()) throw invalid_input("dormant scoring: delta dimension mismatch");
  ForwardCache<float> clean, shifted;
  net.forward(states, clean);
  const Eigen::MatrixXf perturbed = states.colwise() + delta;
  net.forward(perturbed, shifted);

  SensitivityReport report;
  report.batch = static_cast<int>(states.cols());
  for (int l = 1; l < net.layers(); ++l) {
    const auto& a = clean.post[static_cast<std::size_t>(l)];
    const auto& b = shifted.post[static_cast<std::size_t>(l)];
    const Eigen::VectorXd raw = (a - b).cwiseAbs().cast<double>().rowwise().mean();
    report.layers.push_back(normalize_layer(l, net.active(l), {raw.data(), raw.data() + raw.size()}));
  }
  return report;
}

SensitivityReport redo_scores(const MaskedForward<float>& net, const Eigen::MatrixXf& states) {
  check_batch(net, states);
  ForwardCache<float> cache;
  net.forward(states, cache);
  SensitivityReport report;
  report.batch = static_cast<int>(states.cols());
  for (int l = 1; l < net.layers(); ++l) {
    const Eigen::VectorXd raw = cache.post[static_cast<std::size_t>(l)].cwiseAbs().cast<double>().rowwise().mean();
    report.layers.push_back(normalize_layer(l, net.active(l), {raw.data(), raw.data() + raw.size()}));
  }
  return report;
}

namespace {

bool has_trainable_incident(const Params<float>& trainable, int layer, int neuron) {
  const auto& in = trainable[static_cast<std::size_t>(layer - 1)];
  if (in.bias(neuron) != 0.0f || (in.weight.row(neuron).array() != 0.0f).any()) return true;
  if (static_cast<std::size_t>(layer) < trainable.size()) {
    const auto& out = trainable[static_cast<std::size_t>(layer)];
    if ((out.weight.col(neuron).array() != 0.0f).any()) return true;
  }
  return false;
}

}  // namespace

std::vector<NeuronRef> find_dormant(const SensitivityReport& report, double tau,
                                    const Params<float>& trainable, bool skip_degenerate) {
  std::vector<NeuronRef> out;
  for (const auto& ls : report.layers) {
    if (ls.degenerate && skip_degenerate) continue;
    for (std::size_t i = 0; i < ls.neurons.size(); ++i) {
      if (ls.scores[i] > tau) continue;
      if (!has_trainable_incident(trainable, ls.layer, ls.neurons[i])) continue;
      out.push_back({ls.layer, ls.neurons[i]});
    }
  }
  return out;
}

std::size_t reset_dormant(Params<float>& params, const Params<float>& init_store,
                          const std::vector<NeuronRef>& dormant, const Params<float>& trainable,
                          Adam<float>* optimizer) {
  std::size_t written = 0;
  auto reset_at = [&](std::size_t l, Eigen::Index r, Eigen::Index c) {
    params[l].weight(r, c) = init_store[l].weight(r, c);
    if (optimizer) {
      optimizer->first_moment()[l].weight(r, c) = 0.0f;
      optimizer->second_moment()[l].weight(r, c) = 0.0f;
    }
    ++written;
  };
  for (const auto& d : dormant) {
    const auto in = static_cast<std::size_t>(d.layer - 1);
    const auto& tin = trainable[in];
    for (Eigen::Index c = 0; c < tin.weight.cols(); ++c)
      if (tin.weight(d.neuron, c) != 0.0f) reset_at(in, d.neuron, c);
    if (tin.bias(d.neuron) != 0.0f) {
      params[in].bias(d.neuron) = init_store[in].bias(d.neuron);
      if (optimizer) {
        optimizer->first_moment()[in].bias(d.neuron) = 0.0f;
        optimizer->second_moment()[in].bias(d.neuron) = 0.0f;
      }
      ++written;
    }
    const auto out = static_cast<std::size_t>(d.layer);
    if (out < trainable.size()) {
      const auto& tout = trainable[out];
      for (Eigen::Index r = 0; r < tout.weight.rows(); ++r)
        if (tout.weight(r, d.neuron) != 0.0f) reset_at(out, r, d.neuron);
    }
  }
  return written;
}

std::vector<double> input_group_sensitivity(const PolicyFn& policy, const Eigen::MatrixXf& states,
                                            const std::vector<InputGroup>& groups, double delta_scale) {
  if (states.cols() < 1) throw invalid_input("input sensitivity needs at least one state");
  const Eigen::VectorXf mean_abs = states.rowwise().mean().cwiseAbs();
  const Eigen::MatrixXf base = policy(states);
  std::vector<double> out;
  for (const auto& g : groups) {
    if (g.indices.empty()) throw invalid_input("input group '" + g.name + "' is empty");
    Eigen::MatrixXf shifted = states;
    for (int i : g.indices) {
      if (i < 0 || i >= states.rows()) throw invalid_input("input group '" + g.name + "' index out of range");
      shifted.row(i).array() += static_cast<float>(delta_scale) * mean_abs(i);
    }
    const Eigen::MatrixXf moved = policy(shifted);
    out.push_back((moved - base).cwiseAbs().cast<double>().mean());
  }
  return out;
}

}  // namespace ssde
