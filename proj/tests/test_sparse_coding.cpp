#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ssde/errors.hpp"
#include "ssde/sparse_coding.hpp"

using namespace ssde;

namespace {

Eigen::MatrixXd gaussian(int m, int n, ssde::Rng& rng) {
  Eigen::MatrixXd D(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) D(i, j) = rng.normal();
  return D;
}

}  // namespace

TEST_CASE("dictionaries regenerate bit-exactly") {
  const auto a = make_dictionary(1, 4, 8, DictionaryKind::global, 1);
  const auto b = make_dictionary(1, 4, 8, DictionaryKind::global, 1);
  CHECK(a.matrix == b.matrix);
  CHECK(a.matrix.rows() == 4);
  CHECK(a.matrix.cols() == 8);
  // The shared dictionary does not depend on the task.
  const auto g3 = make_dictionary(5, 8, 16, DictionaryKind::global, 2, 3);
  const auto g7 = make_dictionary(5, 8, 16, DictionaryKind::global, 2, 7);
  CHECK(g3.matrix == g7.matrix);
  const auto l3 = make_dictionary(5, 8, 16, DictionaryKind::task_local, 2, 3);
  const auto l7 = make_dictionary(5, 8, 16, DictionaryKind::task_local, 2, 7);
  CHECK(l3.matrix != l7.matrix);
  CHECK(l3.matrix != g3.matrix);
  CHECK(make_dictionary(5, 8, 16, DictionaryKind::global, 1).matrix != g3.matrix);
  CHECK_THROWS_AS(make_dictionary(5, 8, 16, DictionaryKind::task_local, 2), Error);
}

TEST_CASE("dictionary entries look standard normal") {
  const auto d = make_dictionary(11, 64, 1024, DictionaryKind::global, 1);
  const double mean = d.matrix.mean();
  const double var = (d.matrix.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("lasso objective plug-in values") {
  ssde::Rng rng(3);
  const Eigen::MatrixXd D = gaussian(3, 5, rng);
  Eigen::VectorXd e(3);
  e << 1.0, -2.0, 0.5;
  CHECK(lasso_objective(D, e, Eigen::VectorXd::Zero(5), 0.7) == doctest::Approx(0.5 * e.squaredNorm()));
  Eigen::VectorXd a(5);
  a << 0.3, 0, -1, 0, 2;
  CHECK(lasso_objective(D, D * a, a, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(lasso_objective(D, e, a, 0.1) == doctest::Approx(oracle::lasso_obj(D, e, a, 0.1)).epsilon(1e-14));
  CHECK_THROWS_AS(lasso_objective(D, e, Eigen::VectorXd::Zero(4), 0.1), Error);
}

TEST_CASE("zero target and large lambda give the zero code") {
  ssde::Rng rng(4);
  const Eigen::MatrixXd D = gaussian(4, 9, rng);
  const auto z = solve_lasso_lars(D, Eigen::VectorXd::Zero(4), 0.1);
  CHECK(z.values.isZero(0.0));
  CHECK(z.objective == 0.0);
  Eigen::VectorXd e(4);
  e << 0.2, -0.4, 1.0, 0.3;
  const double lmax = (D.transpose() * e).cwiseAbs().maxCoeff();
  CHECK(solve_lasso_lars(D, e, lmax).values.isZero(0.0));
  CHECK(solve_lasso_lars(D, e, 2 * lmax).values.isZero(0.0));
  CHECK_THROWS_AS(solve_lasso_lars(D, e, 0.0), Error);
  CHECK_THROWS_AS(solve_lasso_lars(D, Eigen::VectorXd::Zero(3), 0.1), Error);
}

TEST_CASE("LARS matches the coordinate-descent oracle on small instances") {
  ssde::Rng rng(20240611);
  double worst_obj = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 8);
    const int n = 1 + static_cast<int>(rng.next_u64() % 32);
    const Eigen::MatrixXd D = gaussian(m, n, rng);
    Eigen::VectorXd e(m);
    for (int i = 0; i < m; ++i) e(i) = rng.normal();
    const double lmax = (D.transpose() * e).cwiseAbs().maxCoeff();
    const double lambda = lmax * rng.uniform(0.01, 0.9);
    const auto code = solve_lasso_lars(D, e, lambda);
    const auto ref = oracle::lasso_cd(D, e, lambda);
    worst_obj = std::max(worst_obj, std::abs(oracle::lasso_obj(D, e, code.values, lambda) -
                                             oracle::lasso_obj(D, e, ref, lambda)));
    worst_kkt = std::max(worst_kkt, oracle::kkt_residual(D, e, code.values, lambda));
    CHECK(code.objective == doctest::Approx(oracle::lasso_obj(D, e, code.values, lambda)).epsilon(1e-12));
    CHECK(binarize(code).bits.popcount() <= static_cast<std::size_t>(std::min(m, n)));
  }
  CHECK(worst_obj <= 1e-8);
  CHECK(worst_kkt <= 1e-8);
}

TEST_CASE("m = 3, n = 5 instance at lambda 0.1") {
  ssde::Rng rng(35);
  const Eigen::MatrixXd D = gaussian(3, 5, rng);
  Eigen::VectorXd e(3);
  e << 0.9, -0.3, 0.4;
  const auto code = solve_lasso_lars(D, e, 0.1);
  const auto ref = oracle::lasso_cd(D, e, 0.1);
  CHECK(std::abs(code.objective - oracle::lasso_obj(D, e, ref, 0.1)) < 1e-8);
}

TEST_CASE("larger lambda never grows the l1 norm") {
  ssde::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd D = gaussian(6, 24, rng);
    Eigen::VectorXd e(6);
    for (int i = 0; i < 6; ++i) e(i) = rng.normal();
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0}) {
      const double l1 = solve_lasso_lars(D, e, lambda).values.lpNorm<1>();
      CHECK(l1 <= prev + 1e-12);
      prev = l1;
    }
  }
}

TEST_CASE("correlated and duplicated atoms do not abort") {
  ssde::Rng rng(9);
  Eigen::MatrixXd D = gaussian(4, 10, rng);
  D.col(3) = D.col(1);
  D.col(7) = -D.col(2);
  D.col(8) = D.col(0) + 1e-9 * D.col(5);
  Eigen::VectorXd e = D.col(1) + 0.5 * D.col(2);
  const auto code = solve_lasso_lars(D, e, 1e-3);
  CHECK(code.values.allFinite());
  CHECK(oracle::kkt_residual(D, e, code.values, 1e-3) < 1e-7);
}

TEST_CASE("solver is deterministic") {
  const auto d = make_dictionary(2, 16, 64, DictionaryKind::global, 1);
  Eigen::VectorXd e = Eigen::VectorXd::LinSpaced(16, -1, 1).normalized();
  const auto a = solve_lasso_lars(d.matrix, e, 1e-3);
  const auto b = solve_lasso_lars(d.matrix, e, 1e-3);
  CHECK(a.values == b.values);
}

TEST_CASE("binarize thresholds magnitudes") {
  SparseCode c;
  c.values = Eigen::Vector4d(0, 0.5, -0.3, 0);
  CHECK(binarize(c).bits.to_string() == "0110");
  c.values = Eigen::Vector4d::Zero();
  CHECK(binarize(c).bits.none());
  c.values = Eigen::Vector4d(1e-13, 2e-12, -1e-13, -2e-12);
  CHECK(binarize(c, 1e-12).bits.to_string() == "0101");
}
