#pragma once

// Random masked networks and a central-difference gradient check, shared by
// the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>

#include "ssde/masked_net.hpp"

namespace netgen {

using namespace ssde;

struct RandomNet {
  NetworkShape shape;
  TaskBinding binding;
};

/// frozen_mode per layer: 0 none, 1 everything, 2 random bits.
inline RandomNet random_net(Rng& rng, int max_width = 6) {
  RandomNet out;
  const int L = 2 + static_cast<int>(rng.next_u64() % 3);
  for (int l = 0; l <= L; ++l) out.shape.widths.push_back(1 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(max_width)));
  out.shape.leaky_slope = 0.01;
  std::vector<BitVector> phi;
  for (int l = 0; l <= L; ++l) {
    const auto n = static_cast<std::size_t>(out.shape.widths[static_cast<std::size_t>(l)]);
    if (l == 0 || l == L) {
      phi.push_back(BitVector::ones(n));
      continue;
    }
    BitVector b(n);
    for (std::size_t i = 0; i < n; ++i) b.set(i, rng.uniform() < 0.7);
    if (b.none()) b.set(rng.next_u64() % n);
    phi.push_back(b);
  }
  for (int l = 1; l <= L; ++l) {
    const auto rows = static_cast<std::size_t>(out.shape.widths[static_cast<std::size_t>(l)]);
    const auto cols = static_cast<std::size_t>(out.shape.widths[static_cast<std::size_t>(l - 1)]);
    const int mode = static_cast<int>(rng.next_u64() % 3);
    BitMatrix frozen(rows, cols);
    BitVector bias_frozen(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) frozen.set(r, c, mode == 1 || (mode == 2 && rng.uniform() < 0.4));
      bias_frozen.set(r, mode == 1 || (mode == 2 && rng.uniform() < 0.3));
    }
    out.binding.layers.push_back({phi[static_cast<std::size_t>(l)], phi[static_cast<std::size_t>(l - 1)], frozen, bias_frozen});
  }
  return out;
}

struct GradCheckResult {
  double worst_rel = 0.0;
  long checked = 0;
  long skipped_kinks = 0;
  bool masked_ok = true;  // masked gradient = raw where trainable, exactly 0 elsewhere
};

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Loss 0.5 * ||f(X)||^2 over a small batch. Compares analytic parameter and
/// input gradients with central differences (step 1e-4 * max(1, |x|)).
inline GradCheckResult grad_check(const RandomNet& net, double beta, uint64_t seed) {
  Rng rng(seed);
  MaskedMlp<double> mlp(net.shape, derive_seed(seed, 1));
  Params<double> params = mlp.params();
  for (auto& l : params)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.uniform(-0.5, 0.5);
  MaskedForward<double> view(net.shape, net.binding, beta);
  view.load(params);
  const auto trainable = trainable_mask<double>(net.shape, net.binding);

  MatrixT<double> X(net.shape.input_dim(), 3);
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    for (Eigen::Index r = 0; r < X.rows(); ++r) X(r, c) = rng.normal();

  ForwardCache<double> cache;
  view.forward(X, cache);
  const MatrixT<double> out = view.output(cache);
  Params<double> raw, masked;
  const MatrixT<double> gx = view.backward(cache, out, raw, false);
  view.backward(cache, out, masked, true);

  auto signs = [&](const ForwardCache<double>& c) {
    std::vector<bool> s;
    for (std::size_t l = 1; l + 1 < c.pre.size(); ++l)
      for (Eigen::Index i = 0; i < c.pre[l].size(); ++i) s.push_back(c.pre[l].data()[i] > 0);
    return s;
  };
  const auto base_signs = signs(cache);
  auto loss_at = [&](const Params<double>& p, const MatrixT<double>& x, bool& kink) {
    MaskedForward<double> v(net.shape, net.binding, beta);
    v.load(p);
    ForwardCache<double> c;
    v.forward(x, c);
    if (signs(c) != base_signs) kink = true;
    return 0.5 * v.output(c).squaredNorm();
  };

  GradCheckResult res;
  auto check_coord = [&](double& slot, double analytic) {
    const double x0 = slot;
    const double h = 1e-4 * std::max(1.0, std::abs(x0));
    bool kink = false;
    slot = x0 + h;
    const double up = loss_at(params, X, kink);
    slot = x0 - h;
    const double down = loss_at(params, X, kink);
    slot = x0;
    if (kink) {
      ++res.skipped_kinks;
      return;
    }
    res.worst_rel = std::max(res.worst_rel, rel_err(analytic, (up - down) / (2 * h)));
    ++res.checked;
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto& W = params[l].weight;
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        check_coord(W(r, c), raw[l].weight(r, c));
        const double expect = trainable[l].weight(r, c) != 0 ? raw[l].weight(r, c) : 0.0;
        if (masked[l].weight(r, c) != expect) res.masked_ok = false;
      }
      check_coord(params[l].bias(r), raw[l].bias(r));
      const double expect = trainable[l].bias(r) != 0 ? raw[l].bias(r) : 0.0;
      if (masked[l].bias(r) != expect) res.masked_ok = false;
    }
  }
  MatrixT<double> Xp = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const double x0 = X(r, c);
      const double h = 1e-4 * std::max(1.0, std::abs(x0));
      bool kink = false;
      Xp(r, c) = x0 + h;
      const double up = loss_at(params, Xp, kink);
      Xp(r, c) = x0 - h;
      const double down = loss_at(params, Xp, kink);
      Xp(r, c) = x0;
      if (kink) {
        ++res.skipped_kinks;
        continue;
      }
      res.worst_rel = std::max(res.worst_rel, rel_err(gx(r, c), (up - down) / (2 * h)));
      ++res.checked;
    }
  return res;
}

}  // namespace netgen
