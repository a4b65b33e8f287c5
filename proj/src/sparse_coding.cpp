#include "ssde/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ssde/errors.hpp"
#include "ssde/rng.hpp"

namespace ssde {

namespace {

constexpr uint64_t kDictionaryStreamTag = 0x64696374'00000001ULL;  // "dict", stream v1

// A new column is rejected when its residual norm against the active span
// falls below this fraction of its own norm.
constexpr double kRankTolerance = 1e-10;

/// Lower Cholesky factor of the active-set Gram matrix D_A^T D_A.
class ActiveCholesky {
 public:
  explicit ActiveCholesky(int capacity) : factor_(Eigen::MatrixXd::Zero(capacity, capacity)) {}

  int size() const { return size_; }

  /// Appends one column given its Gram entries against the current active set
  /// and its squared norm. Returns false if the column is (numerically) in the
  /// span of the active set.
  bool append(const Eigen::VectorXd& cross, double diag) {
    const int k = size_;
    Eigen::VectorXd z = cross;
    if (k > 0) factor_.topLeftCorner(k, k).triangularView<Eigen::Lower>().solveInPlace(z);
    const double r2 = diag - (k > 0 ? z.squaredNorm() : 0.0);
    if (!(r2 > kRankTolerance * diag)) return false;
    if (k > 0) factor_.row(k).head(k) = z.transpose();
    factor_(k, k) = std::sqrt(r2);
    ++size_;
    return true;
  }

  /// Deletes active position p, restoring triangularity with Givens rotations.
  void remove(int p) {
    const int k = size_;
    for (int i = p; i < k - 1; ++i) factor_.row(i).head(k) = factor_.row(i + 1).head(k);
    factor_.row(k - 1).setZero();
    for (int i = p; i < k - 1; ++i) {
      const double a = factor_(i, i);
      const double b = factor_(i, i + 1);
      const double r = std::hypot(a, b);
      if (r == 0.0) continue;
      const double c = a / r;
      const double s = b / r;
      for (int j = i; j < k - 1; ++j) {
        const double x = factor_(j, i);
        const double y = factor_(j, i + 1);
        factor_(j, i) = c * x + s * y;
        factor_(j, i + 1) = -s * x + c * y;
      }
      factor_(i, i + 1) = 0.0;
    }
    factor_.col(k - 1).setZero();
    --size_;
  }

  bool healthy() const {
    for (int i = 0; i < size_; ++i)
      if (!(factor_(i, i) > 1e-12)) return false;
    return true;
  }

  void refactorize(const Eigen::MatrixXd& gram) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    size_ = static_cast<int>(gram.rows());
    factor_.topLeftCorner(size_, size_) = llt.matrixL();
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    const auto lower = factor_.topLeftCorner(size_, size_).triangularView<Eigen::Lower>();
    Eigen::VectorXd x = lower.solve(rhs);
    lower.transpose().solveInPlace(x);
    return x;
  }

 private:
  Eigen::MatrixXd factor_;
  int size_ = 0;
};

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& dict, const std::vector<int>& idx) {
  Eigen::MatrixXd out(dict.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = dict.col(idx[i]);
  return out;
}

}  // namespace

Dictionary make_dictionary(uint64_t seed, int m, int n, DictionaryKind kind, int layer_index,
                           std::optional<int> task_id) {
  if (m < 1 || n < 1) throw invalid_input("dictionary dimensions must be positive");
  uint64_t key = derive_seed(kDictionaryStreamTag, seed, static_cast<uint64_t>(kind),
                             static_cast<uint64_t>(layer_index));
  if (kind == DictionaryKind::task_local) {
    if (!task_id) throw invalid_input("task-local dictionary requires a task id");
    key = derive_seed(key, static_cast<uint64_t>(*task_id));
  }
  Rng rng(key);
  Dictionary d;
  d.matrix.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) d.matrix(i, j) = rng.normal();
  d.seed = seed;
  d.kind = kind;
  d.layer_index = layer_index;
  return d;
}

double lasso_objective(const Eigen::MatrixXd& dict, const Eigen::VectorXd& target,
                       const Eigen::VectorXd& alpha, double lambda) {
  if (dict.rows() != target.size() || dict.cols() != alpha.size())
    throw invalid_input("lasso_objective: shape mismatch");
  return 0.5 * (target - dict * alpha).squaredNorm() + lambda * alpha.lpNorm<1>();
}

SparseCode solve_lasso_lars(const Eigen::MatrixXd& dict, const Eigen::VectorXd& target,
                            double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw invalid_input("lasso: lambda must be > 0");
  if (dict.rows() != target.size()) throw invalid_input("lasso: dictionary rows != target length");

  const int n = static_cast<int>(dict.cols());
  SparseCode code;
  code.lambda = lambda;
  code.values = Eigen::VectorXd::Zero(n);

  enum : char { inactive = 0, active = 1, excluded = 2 };
  std::vector<char> state(static_cast<std::size_t>(n), inactive);
  std::vector<int> act;
  std::vector<double> signs;
  const Eigen::VectorXd col_sq = dict.colwise().squaredNorm().transpose();
  for (int j = 0; j < n; ++j)
    if (col_sq[j] == 0.0) state[static_cast<std::size_t>(j)] = excluded;

  ActiveCholesky chol(n);
  Eigen::VectorXd corr = dict.transpose() * target;

  auto try_add = [&](int j) {
    Eigen::VectorXd cross(static_cast<Eigen::Index>(act.size()));
    for (std::size_t a = 0; a < act.size(); ++a)
      cross[static_cast<Eigen::Index>(a)] = dict.col(act[a]).dot(dict.col(j));
    if (chol.append(cross, col_sq[j])) {
      act.push_back(j);
      signs.push_back(corr[j] >= 0.0 ? 1.0 : -1.0);
      state[static_cast<std::size_t>(j)] = active;
    } else {
      state[static_cast<std::size_t>(j)] = excluded;
    }
  };

  // Entry: the most correlated atom, unless the zero code is already optimal.
  while (act.empty()) {
    int best = -1;
    double best_abs = -1.0;
    for (int j = 0; j < n; ++j) {
      if (state[static_cast<std::size_t>(j)] != inactive) continue;
      if (std::abs(corr[j]) > best_abs) {
        best_abs = std::abs(corr[j]);
        best = j;
      }
    }
    if (best < 0 || best_abs <= lambda) {
      code.objective = lasso_objective(dict, target, code.values, lambda);
      return code;
    }
    try_add(best);
  }

  const int max_iter = 8 * n + 16;
  Eigen::VectorXd& alpha = code.values;
  for (int it = 0; it < max_iter; ++it) {
    code.iterations = it + 1;
    corr.noalias() = dict.transpose() * (target - dict * alpha);
    double c_max = 0.0;
    for (int j : act) c_max = std::max(c_max, std::abs(corr[j]));
    if (c_max <= lambda) break;

    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(signs.data(), static_cast<Eigen::Index>(signs.size()));
    const Eigen::VectorXd w = chol.solve(s);
    const Eigen::MatrixXd d_active = gather_columns(dict, act);
    const Eigen::VectorXd u = d_active * w;
    const Eigen::VectorXd a = dict.transpose() * u;

    const double tiny = 1e-12 * std::max(1.0, c_max);
    double gamma = c_max - lambda;
    enum { reach, add, drop } event = reach;
    int which = -1;

    for (int j = 0; j < n; ++j) {
      if (state[static_cast<std::size_t>(j)] != inactive) continue;
      const double lo = 1.0 - a[j];
      const double hi = 1.0 + a[j];
      if (lo > 1e-12) {
        const double g = (c_max - corr[j]) / lo;
        if (g > tiny && g < gamma) {
          gamma = g;
          event = add;
          which = j;
        }
      }
      if (hi > 1e-12) {
        const double g = (c_max + corr[j]) / hi;
        if (g > tiny && g < gamma) {
          gamma = g;
          event = add;
          which = j;
        }
      }
    }
    for (std::size_t q = 0; q < act.size(); ++q) {
      const double wq = w[static_cast<Eigen::Index>(q)];
      if (wq == 0.0) continue;
      const double g = -alpha[act[q]] / wq;
      if (g > tiny && g < gamma) {
        gamma = g;
        event = drop;
        which = static_cast<int>(q);
      }
    }

    for (std::size_t q = 0; q < act.size(); ++q)
      alpha[act[q]] += gamma * w[static_cast<Eigen::Index>(q)];

    if (event == reach) break;
    if (event == drop) {
      const int j = act[static_cast<std::size_t>(which)];
      alpha[j] = 0.0;
      chol.remove(which);
      act.erase(act.begin() + which);
      signs.erase(signs.begin() + which);
      state[static_cast<std::size_t>(j)] = inactive;
    } else {
      corr.noalias() = dict.transpose() * (target - dict * alpha);
      try_add(which);
    }
    if (!chol.healthy()) {
      const Eigen::MatrixXd da = gather_columns(dict, act);
      chol.refactorize(da.transpose() * da);
    }
  }

  // Polish: on a sign-consistent active set the Lasso optimum solves
  // D_A^T D_A x = D_A^T e - lambda s exactly.
  if (!act.empty()) {
    const Eigen::MatrixXd da = gather_columns(dict, act);
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(signs.data(), static_cast<Eigen::Index>(signs.size()));
    const Eigen::VectorXd x = chol.solve(da.transpose() * target - lambda * s);
    bool consistent = true;
    for (Eigen::Index q = 0; q < x.size(); ++q)
      if (x[q] * s[q] <= 0.0) consistent = false;
    if (consistent) {
      Eigen::VectorXd candidate = alpha;
      for (std::size_t q = 0; q < act.size(); ++q) candidate[act[q]] = x[static_cast<Eigen::Index>(q)];
      if (lasso_objective(dict, target, candidate, lambda) <=
          lasso_objective(dict, target, alpha, lambda))
        alpha = candidate;
    }
  }

  code.objective = lasso_objective(dict, target, alpha, lambda);
  return code;
}

SparseCode solve_lasso_lars(const Dictionary& dict, const TaskEmbedding& e, double lambda) {
  if (dict.matrix.rows() != static_cast<Eigen::Index>(e.dim()))
    throw invalid_input("lasso: embedding dimension " + std::to_string(e.dim()) +
                        " does not match dictionary rows " + std::to_string(dict.matrix.rows()));
  const Eigen::VectorXd target =
      Eigen::Map<const Eigen::VectorXd>(e.values.data(), static_cast<Eigen::Index>(e.dim()));
  return solve_lasso_lars(dict.matrix, target, lambda);
}

NeuronMask binarize(const SparseCode& code, double epsilon, int layer_index) {
  NeuronMask mask{BitVector(static_cast<std::size_t>(code.values.size())), layer_index};
  for (Eigen::Index i = 0; i < code.values.size(); ++i)
    if (std::abs(code.values[i]) > epsilon) mask.bits.set(static_cast<std::size_t>(i));
  return mask;
}

}  // namespace ssde
