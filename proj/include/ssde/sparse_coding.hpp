#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "ssde/bits.hpp"
#include "ssde/embedding.hpp"

namespace ssde {

enum class DictionaryKind : uint8_t { global = 0, task_local = 1 };

/// Gaussian over-complete dictionary, one atom (column) per neuron.
struct Dictionary {
  Eigen::MatrixXd matrix;  // m x n
  uint64_t seed = 0;
  DictionaryKind kind = DictionaryKind::global;
  int layer_index = 0;
};

struct SparseCode {
  Eigen::VectorXd values;
  double lambda = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

struct NeuronMask {
  BitVector bits;
  int layer_index = 0;
};

inline constexpr double kDefaultBinarizeEpsilon = 1e-12;

/// Entries drawn i.i.d. N(0,1) from a stream keyed by (seed, kind, layer) and,
/// for task-local dictionaries, the task id. Global dictionaries ignore task_id.
Dictionary make_dictionary(uint64_t seed, int m, int n, DictionaryKind kind, int layer_index,
                           std::optional<int> task_id = std::nullopt);

/// 0.5 * ||e - D alpha||^2 + lambda * ||alpha||_1
double lasso_objective(const Eigen::MatrixXd& dict, const Eigen::VectorXd& target,
                       const Eigen::VectorXd& alpha, double lambda);

/// Lasso solution by the LARS homotopy with sign-restricted drop steps.
/// The active-set Gram factor is maintained by Cholesky append/delete and
/// rebuilt from scratch if it loses positive definiteness.
SparseCode solve_lasso_lars(const Eigen::MatrixXd& dict, const Eigen::VectorXd& target,
                            double lambda);

SparseCode solve_lasso_lars(const Dictionary& dict, const TaskEmbedding& e, double lambda);

/// bit_i = |alpha_i| > epsilon
NeuronMask binarize(const SparseCode& code, double epsilon = kDefaultBinarizeEpsilon,
                    int layer_index = 0);

}  // namespace ssde
