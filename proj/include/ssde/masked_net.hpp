#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ssde/allocation.hpp"
#include "ssde/bits.hpp"
#include "ssde/errors.hpp"
#include "ssde/rng.hpp"

namespace ssde {

template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Layer widths n^(0)..n^(L). Hidden layers use LeakyReLU, the output layer
/// is affine.
struct NetworkShape {
  std::vector<int> widths;
  double leaky_slope = 0.01;

  int layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 3) throw invalid_input("network needs at least 2 layers");
    for (int w : widths)
      if (w <= 0) throw invalid_input("network widths must be positive");
  }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

template <typename T>
struct LayerParams {
  MatrixT<T> weight;  // n^(l) x n^(l-1)
  VectorT<T> bias;    // n^(l)
};

/// Parameters of layers 1..L, vector index l-1.
template <typename T>
using Params = std::vector<LayerParams<T>>;

template <typename T>
Params<T> zeros_like(const NetworkShape& shape) {
  Params<T> p(static_cast<std::size_t>(shape.layers()));
  for (int l = 1; l <= shape.layers(); ++l) {
    p[static_cast<std::size_t>(l - 1)].weight = MatrixT<T>::Zero(shape.widths[static_cast<std::size_t>(l)], shape.widths[static_cast<std::size_t>(l - 1)]);
    p[static_cast<std::size_t>(l - 1)].bias = VectorT<T>::Zero(shape.widths[static_cast<std::size_t>(l)]);
  }
  return p;
}

template <typename T>
bool all_finite(const Params<T>& p) {
  for (const auto& layer : p)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

/// How one task sees layer l: its neuron masks on both sides, the frozen
/// weight mask Psi_{k-1}, and which biases are frozen.
struct LayerBinding {
  BitVector out_active;  // phi^(l)
  BitVector in_active;   // phi^(l-1)
  BitMatrix frozen;      // Psi_{k-1}^(l)
  BitVector bias_frozen;
};

struct TaskBinding {
  std::vector<LayerBinding> layers;

  /// Every neuron active, nothing frozen: a plain MLP.
  static TaskBinding dense(const NetworkShape& shape) {
    TaskBinding b;
    for (int l = 1; l <= shape.layers(); ++l) {
      const auto rows = static_cast<std::size_t>(shape.widths[static_cast<std::size_t>(l)]);
      const auto cols = static_cast<std::size_t>(shape.widths[static_cast<std::size_t>(l - 1)]);
      b.layers.push_back({BitVector::ones(rows), BitVector::ones(cols), BitMatrix(rows, cols), BitVector(rows)});
    }
    return b;
  }

  static TaskBinding bind(const MaskSet& masks, const FrozenSnapshot& frozen) {
    if (static_cast<int>(frozen.weights.size()) != masks.layers())
      throw invalid_input("binding: frozen snapshot layer count mismatch");
    TaskBinding b;
    for (int l = 1; l <= masks.layers(); ++l) {
      const auto i = static_cast<std::size_t>(l);
      b.layers.push_back({masks.phi[i], masks.phi[i - 1], frozen.weights[i - 1], frozen.bias[i - 1]});
    }
    return b;
  }
};

/// Parameter-shaped 0/1 arrays marking trainable coordinates:
/// (1 - Psi_{k-1}) AND Psi~_k for weights, phi AND NOT frozen for biases.
template <typename T>
Params<T> trainable_mask(const NetworkShape& shape, const TaskBinding& binding) {
  auto mask = zeros_like<T>(shape);
  for (std::size_t l = 0; l < binding.layers.size(); ++l) {
    const auto& lb = binding.layers[l];
    const auto rows = lb.out_active.indices();
    const auto cols = lb.in_active.indices();
    for (int r : rows) {
      for (int c : cols)
        if (!lb.frozen.get(static_cast<std::size_t>(r), static_cast<std::size_t>(c)))
          mask[l].weight(r, c) = T(1);
      if (!lb.bias_frozen.get(static_cast<std::size_t>(r))) mask[l].bias(r) = T(1);
    }
  }
  return mask;
}

/// Multilayer network with stored initial values.
template <typename T>
class MaskedMlp {
 public:
  MaskedMlp() = default;

  /// He-uniform (LeakyReLU gain) hidden layers, LeCun-uniform output layer,
  /// zero biases. Captures the init store.
  MaskedMlp(NetworkShape shape, uint64_t seed) : shape_(std::move(shape)) {
    shape_.validate();
    params_ = zeros_like<T>(shape_);
    Rng rng(seed);
    for (int l = 1; l <= shape_.layers(); ++l) {
      const double fan_in = shape_.widths[static_cast<std::size_t>(l - 1)];
      const double gain = l < shape_.layers() ? 2.0 / (1.0 + shape_.leaky_slope * shape_.leaky_slope) : 1.0;
      const double bound = std::sqrt(3.0 * gain / fan_in);
      auto& w = params_[static_cast<std::size_t>(l - 1)].weight;
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<T>(rng.uniform(-bound, bound));
    }
    snapshot_init();
  }

  const NetworkShape& shape() const { return shape_; }
  Params<T>& params() { return params_; }
  const Params<T>& params() const { return params_; }
  const Params<T>& init_store() const { return init_; }

  /// Deep copy of the current parameters; allowed once.
  void snapshot_init() {
    if (captured_) throw contract_violation("init store already captured");
    init_ = params_;
    captured_ = true;
  }

  /// Restores state loaded from a checkpoint.
  void restore(NetworkShape shape, Params<T> params, Params<T> init) {
    shape_ = std::move(shape);
    params_ = std::move(params);
    init_ = std::move(init);
    captured_ = true;
  }

 private:
  NetworkShape shape_;
  Params<T> params_;
  Params<T> init_;
  bool captured_ = false;
};

/// Activations of a forward pass in compact (active-neuron) coordinates.
/// post[0] is the gathered input, post[l] the output of layer l.
template <typename T>
struct ForwardCache {
  std::vector<MatrixT<T>> pre;
  std::vector<MatrixT<T>> post;
  bool valid = false;
};

/// A network bound to one task's masks and beta. Effective weights are
/// gathered onto the active sub-network, so each layer computes
///   y^ = ((1 - Psi) * Psi~ * W) y + beta (Psi * Psi~ * W) y + b * phi
/// over the active rows and columns only. Call load() after parameters change.
template <typename T>
class MaskedForward {
 public:
  MaskedForward() = default;

  MaskedForward(const NetworkShape& shape, const TaskBinding& binding, T beta)
      : shape_(shape), beta_(beta) {
    if (static_cast<int>(binding.layers.size()) != shape.layers())
      throw invalid_input("binding layer count does not match network");
    layers_.resize(binding.layers.size());
    for (std::size_t l = 0; l < binding.layers.size(); ++l) {
      const auto& lb = binding.layers[l];
      auto& cl = layers_[l];
      if (lb.out_active.size() != static_cast<std::size_t>(shape.widths[l + 1]) ||
          lb.in_active.size() != static_cast<std::size_t>(shape.widths[l]) ||
          lb.frozen.rows() != lb.out_active.size() || lb.frozen.cols() != lb.in_active.size())
        throw invalid_input("binding shape mismatch at layer " + std::to_string(l + 1));
      if (l > 0 && !(lb.in_active == binding.layers[l - 1].out_active))
        throw invalid_input("binding: neuron masks of adjacent layers disagree");
      cl.rows = lb.out_active.indices();
      cl.cols = lb.in_active.indices();
      const auto nr = static_cast<Eigen::Index>(cl.rows.size());
      const auto nc = static_cast<Eigen::Index>(cl.cols.size());
      cl.scale = MatrixT<T>::Ones(nr, nc);
      cl.trainable = MatrixT<T>::Ones(nr, nc);
      cl.bias_trainable = VectorT<T>::Ones(nr);
      cl.has_frozen = false;
      for (Eigen::Index r = 0; r < nr; ++r) {
        const auto fr = static_cast<std::size_t>(cl.rows[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < nc; ++c) {
          if (lb.frozen.get(fr, static_cast<std::size_t>(cl.cols[static_cast<std::size_t>(c)]))) {
            cl.scale(r, c) = beta;
            cl.trainable(r, c) = T(0);
            cl.has_frozen = true;
          }
        }
        if (lb.bias_frozen.get(fr)) cl.bias_trainable(r) = T(0);
      }
    }
  }

  const NetworkShape& shape() const { return shape_; }
  T beta() const { return beta_; }
  int layers() const { return static_cast<int>(layers_.size()); }

  /// Active neuron indices of layer l (1..L).
  const std::vector<int>& active(int l) const { return layers_[static_cast<std::size_t>(l - 1)].rows; }

  void load(const Params<T>& params) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& cl = layers_[l];
      const auto& w = params[l].weight;
      cl.effective.resize(static_cast<Eigen::Index>(cl.rows.size()), static_cast<Eigen::Index>(cl.cols.size()));
      cl.bias.resize(static_cast<Eigen::Index>(cl.rows.size()));
      for (std::size_t c = 0; c < cl.cols.size(); ++c)
        for (std::size_t r = 0; r < cl.rows.size(); ++r)
          cl.effective(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(cl.rows[r], cl.cols[c]);
      if (cl.has_frozen) cl.effective.array() *= cl.scale.array();
      for (std::size_t r = 0; r < cl.rows.size(); ++r) cl.bias(static_cast<Eigen::Index>(r)) = params[l].bias(cl.rows[r]);
    }
    loaded_ = true;
  }

  /// input: n^(0) x batch.
  void forward(const MatrixT<T>& input, ForwardCache<T>& cache) const {
    if (!loaded_) throw contract_violation("MaskedForward::forward before load()");
    if (input.rows() != shape_.input_dim()) throw invalid_input("forward: input has wrong dimension");
    const auto L = layers_.size();
    cache.pre.resize(L + 1);
    cache.post.resize(L + 1);
    const auto& first = layers_.front();
    auto& x0 = cache.post[0];
    x0.resize(static_cast<Eigen::Index>(first.cols.size()), input.cols());
    for (std::size_t c = 0; c < first.cols.size(); ++c) x0.row(static_cast<Eigen::Index>(c)) = input.row(first.cols[c]);

    const T slope = static_cast<T>(shape_.leaky_slope);
    for (std::size_t l = 0; l < L; ++l) {
      const auto& cl = layers_[l];
      auto& z = cache.pre[l + 1];
      z.noalias() = cl.effective * cache.post[l];
      z.colwise() += cl.bias;
      if (l + 1 < L)
        cache.post[l + 1] = z.array().max(z.array() * slope);
      else
        cache.post[l + 1] = z;
    }
    cache.valid = true;
  }

  /// Output layer in full coordinates (n^(L) x batch).
  MatrixT<T> output(const ForwardCache<T>& cache) const {
    const auto& last = layers_.back();
    const auto& y = cache.post.back();
    if (static_cast<int>(last.rows.size()) == shape_.output_dim()) return y;
    MatrixT<T> out = MatrixT<T>::Zero(shape_.output_dim(), y.cols());
    for (std::size_t r = 0; r < last.rows.size(); ++r) out.row(last.rows[r]) = y.row(static_cast<Eigen::Index>(r));
    return out;
  }

  MatrixT<T> forward(const MatrixT<T>& input) const {
    ForwardCache<T> cache;
    forward(input, cache);
    return output(cache);
  }

  /// Reverse pass for a loss whose gradient w.r.t. the output is grad_out
  /// (n^(L) x batch, summed over the batch by the caller's convention).
  /// Writes parameter gradients into `grads` (full shape, overwritten); with
  /// mask_frozen they are multiplied by the trainable mask. The signal still
  /// flows through frozen weights into earlier layers. Returns the gradient
  /// w.r.t. the input (n^(0) x batch).
  MatrixT<T> backward(const ForwardCache<T>& cache, const MatrixT<T>& grad_out, Params<T>& grads,
                      bool mask_frozen = true) const {
    return backward_impl(cache, grad_out, &grads, mask_frozen);
  }

  /// Input gradient only; skips the parameter-gradient products.
  MatrixT<T> backward_input(const ForwardCache<T>& cache, const MatrixT<T>& grad_out) const {
    return backward_impl(cache, grad_out, nullptr, false);
  }

 private:
  MatrixT<T> backward_impl(const ForwardCache<T>& cache, const MatrixT<T>& grad_out, Params<T>* grads_out,
                           bool mask_frozen) const {
    if (!cache.valid) throw contract_violation("backward without a forward cache");
    const auto L = layers_.size();
    if (grads_out && grads_out->size() != L) *grads_out = zeros_like<T>(shape_);
    const auto& last = layers_.back();
    MatrixT<T> delta(static_cast<Eigen::Index>(last.rows.size()), grad_out.cols());
    for (std::size_t r = 0; r < last.rows.size(); ++r) delta.row(static_cast<Eigen::Index>(r)) = grad_out.row(last.rows[r]);

    const T slope = static_cast<T>(shape_.leaky_slope);
    MatrixT<T> gw;
    for (std::size_t li = L; li-- > 0;) {
      const auto& cl = layers_[li];
      if (li + 1 < L)
        delta.array() *= (cache.pre[li + 1].array() > T(0)).template cast<T>() * (T(1) - slope) + slope;

      if (grads_out) {
        gw.noalias() = delta * cache.post[li].transpose();
        VectorT<T> gb = delta.rowwise().sum();
        if (mask_frozen && cl.has_frozen) gw.array() *= cl.trainable.array();
        else if (!mask_frozen && cl.has_frozen) gw.array() *= cl.scale.array();
        if (mask_frozen) gb.array() *= cl.bias_trainable.array();

        auto& g = (*grads_out)[li];
        g.weight.setZero(shape_.widths[li + 1], shape_.widths[li]);
        g.bias.setZero(shape_.widths[li + 1]);
        for (std::size_t c = 0; c < cl.cols.size(); ++c)
          for (std::size_t r = 0; r < cl.rows.size(); ++r)
            g.weight(cl.rows[r], cl.cols[c]) = gw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (std::size_t r = 0; r < cl.rows.size(); ++r) g.bias(cl.rows[r]) = gb(static_cast<Eigen::Index>(r));
      }
      MatrixT<T> prev = cl.effective.transpose() * delta;
      delta.swap(prev);
    }

    const auto& first = layers_.front();
    MatrixT<T> grad_in = MatrixT<T>::Zero(shape_.input_dim(), grad_out.cols());
    for (std::size_t c = 0; c < first.cols.size(); ++c) grad_in.row(first.cols[c]) = delta.row(static_cast<Eigen::Index>(c));
    return grad_in;
  }

  struct CompactLayer {
    std::vector<int> rows;
    std::vector<int> cols;
    MatrixT<T> scale;      // 1 trainable, beta frozen
    MatrixT<T> trainable;  // 1 trainable, 0 frozen
    VectorT<T> bias_trainable;
    MatrixT<T> effective;
    VectorT<T> bias;
    bool has_frozen = false;
  };

  NetworkShape shape_;
  T beta_ = T(1);
  std::vector<CompactLayer> layers_;
  bool loaded_ = false;
};

/// One-shot masked forward pass: output in full coordinates.
template <typename T>
MatrixT<T> forward(const NetworkShape& shape, const Params<T>& params, const MaskSet& masks,
                   const FrozenSnapshot& frozen, T beta, const MatrixT<T>& input) {
  MaskedForward<T> view(shape, TaskBinding::bind(masks, frozen), beta);
  view.load(params);
  return view.forward(input);
}

}  // namespace ssde
