#pragma once

#include <cmath>
#include <cstdint>

#include "ssde/masked_net.hpp"

namespace ssde {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a parameter set. With a trainable mask, gradients are masked
/// first and the step is applied only where the mask is 1, so masked
/// coordinates and their moments never change.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const NetworkShape& shape, AdamConfig cfg) : cfg_(cfg) {
    m_ = zeros_like<T>(shape);
    v_ = zeros_like<T>(shape);
  }

  const AdamConfig& config() const { return cfg_; }
  int64_t steps() const { return t_; }
  int64_t skipped() const { return skipped_; }

  void reset() {
    for (auto& l : m_) { l.weight.setZero(); l.bias.setZero(); }
    for (auto& l : v_) { l.weight.setZero(); l.bias.setZero(); }
    t_ = 0;
  }

  /// Returns false (and counts a skip) when the gradient has a non-finite entry.
  bool step(Params<T>& params, const Params<T>& grads, const Params<T>* mask = nullptr) {
    if (!all_finite(grads)) {
      ++skipped_;
      return false;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T step_size = static_cast<T>(cfg_.lr / bc1);
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T sqrt_bc2 = static_cast<T>(std::sqrt(bc2));
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t l = 0; l < params.size(); ++l) {
      apply(params[l].weight.array(), grads[l].weight.array(), m_[l].weight.array(), v_[l].weight.array(),
            mask ? &(*mask)[l].weight : nullptr, b1, b2, step_size, sqrt_bc2, eps);
      apply(params[l].bias.array(), grads[l].bias.array(), m_[l].bias.array(), v_[l].bias.array(),
            mask ? &(*mask)[l].bias : nullptr, b1, b2, step_size, sqrt_bc2, eps);
    }
    return true;
  }

  Params<T>& first_moment() { return m_; }
  Params<T>& second_moment() { return v_; }
  const Params<T>& first_moment() const { return m_; }
  const Params<T>& second_moment() const { return v_; }

 private:
  // Where the mask is 0 the masked gradient is 0, so the moments there stay
  // at whatever reset() or a dormant reset left (0) and the step is 0 exactly.
  template <typename P, typename G, typename M, typename V, typename Mask>
  static void apply(P p, const G& g, M m, V v, const Mask* mask, T b1, T b2, T step_size, T sqrt_bc2, T eps) {
    const Eigen::Index n = p.size();
    T* pd = p.data();
    const T* gd = g.data();
    T* md = m.data();
    T* vd = v.data();
    const T* kd = mask ? mask->data() : nullptr;
    for (Eigen::Index i = 0; i < n; ++i) {
      const T k = kd ? kd[i] : T(1);
      const T gi = gd[i] * k;
      md[i] = b1 * md[i] + (T(1) - b1) * gi;
      vd[i] = b2 * vd[i] + (T(1) - b2) * gi * gi;
      pd[i] -= k * (step_size * md[i] / (std::sqrt(vd[i]) / sqrt_bc2 + eps));
    }
  }

  AdamConfig cfg_;
  Params<T> m_;
  Params<T> v_;
  int64_t t_ = 0;
  int64_t skipped_ = 0;
};

/// Adam on a single scalar (the SAC log-temperature).
class ScalarAdam {
 public:
  explicit ScalarAdam(AdamConfig cfg = {}) : cfg_(cfg) {}

  double step(double value, double grad) {
    if (!std::isfinite(grad)) return value;
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad * grad;
    const double mhat = m_ / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const double vhat = v_ / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    return value - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }

  void reset() { m_ = v_ = 0.0; t_ = 0; }

 private:
  AdamConfig cfg_;
  double m_ = 0.0;
  double v_ = 0.0;
  int64_t t_ = 0;
};

}  // namespace ssde
