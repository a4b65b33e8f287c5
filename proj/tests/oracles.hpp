#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solvers or networks.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ssde/rng.hpp"

namespace oracle {

/// Plain cyclic coordinate descent for 0.5||e - D a||^2 + lambda ||a||_1.
inline Eigen::VectorXd lasso_cd(const Eigen::MatrixXd& D, const Eigen::VectorXd& e, double lambda,
                                int max_sweeps = 200000, double tol = 1e-15) {
  const auto n = D.cols();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = e;
  const Eigen::VectorXd sq = D.colwise().squaredNorm().transpose();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double biggest = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (sq(j) == 0.0) continue;
      const double rho = D.col(j).dot(r) + sq(j) * a(j);
      const double soft = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / sq(j);
      const double change = soft - a(j);
      if (change != 0.0) {
        r -= change * D.col(j);
        a(j) = soft;
        biggest = std::max(biggest, std::abs(change));
      }
    }
    if (biggest < tol) break;
  }
  return a;
}

inline double lasso_obj(const Eigen::MatrixXd& D, const Eigen::VectorXd& e, const Eigen::VectorXd& a,
                        double lambda) {
  return 0.5 * (e - D * a).squaredNorm() + lambda * a.lpNorm<1>();
}

/// Largest KKT violation: |D_j^T r| <= lambda off the support, = lambda with
/// the coefficient's sign on it.
inline double kkt_residual(const Eigen::MatrixXd& D, const Eigen::VectorXd& e, const Eigen::VectorXd& a,
                           double lambda) {
  const Eigen::VectorXd c = D.transpose() * (e - D * a);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a(j) != 0.0)
      worst = std::max(worst, std::abs(c(j) - lambda * (a(j) > 0 ? 1.0 : -1.0)));
    else
      worst = std::max(worst, std::max(0.0, std::abs(c(j)) - lambda));
  }
  return worst;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(ra.size());
  mb /= static_cast<double>(rb.size());
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ab += (ra[i] - ma) * (rb[i] - mb);
    aa += (ra[i] - ma) * (ra[i] - ma);
    bb += (rb[i] - mb) * (rb[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace oracle
