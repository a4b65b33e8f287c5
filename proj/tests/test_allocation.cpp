#include <doctest.h>

#include <array>

#include "oracles.hpp"
#include "ssde/allocation.hpp"
#include "ssde/envs.hpp"
#include "ssde/errors.hpp"

using namespace ssde;

namespace {

const std::vector<int> kWidths{8, 256, 256, 256, 4};

BitVector random_bits(std::size_t n, ssde::Rng& rng, double p = 0.5) {
  BitVector b(n);
  for (std::size_t i = 0; i < n; ++i) b.set(i, rng.uniform() < p);
  return b;
}

TaskEmbedding embedding_of(int task_id, const std::string& text) {
  auto e = embed_description({task_id, text}, 64, 0);
  e.task_id = task_id;
  return e;
}

AllocationConfig default_alloc() { return AllocationConfig{1e-3, 1e-3, 1e-12, 2024, true}; }

}  // namespace

TEST_CASE("bit containers round trip through strings and keep padding clear") {
  ssde::Rng rng(1);
  for (std::size_t n : {1u, 63u, 64u, 65u, 130u}) {
    const auto b = random_bits(n, rng);
    CHECK(BitVector::from_string(b.to_string()) == b);
    const auto w = b.words();
    if (n % 64) CHECK((w.back() >> (n % 64)) == 0);
  }
  CHECK_THROWS_AS(BitVector::from_string("01x"), Error);
}

TEST_CASE("param mask is the outer product of neuron masks") {
  const auto m = param_mask(BitVector::from_string("10"), BitVector::from_string("11"));
  CHECK(m.get(0, 0));
  CHECK(m.get(0, 1));
  CHECK_FALSE(m.get(1, 0));
  CHECK_FALSE(m.get(1, 1));
  CHECK(param_mask(BitVector(5), BitVector::ones(3)).popcount() == 0);
  CHECK(param_mask(BitVector::ones(5), BitVector(3)).popcount() == 0);

  ssde::Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_bits(8, rng), b = random_bits(8, rng);
    const auto pm = param_mask(a, b);
    CHECK(pm.popcount() == a.popcount() * b.popcount());
    for (std::size_t p = 0; p < 8; ++p)
      for (std::size_t q = 0; q < 8; ++q) CHECK(pm.get(p, q) == (a.get(p) && b.get(q)));
  }
}

TEST_CASE("frozen union is the bitwise OR of the archive") {
  const std::vector<int> widths{3, 5, 4};
  const auto empty = frozen_union({}, widths);
  REQUIRE(empty.size() == 2);
  CHECK(empty[0].popcount() == 0);
  CHECK(empty[1].popcount() == 0);

  ssde::Rng rng(3);
  std::vector<std::vector<BitMatrix>> archive;
  for (int k = 0; k < 3; ++k) {
    std::vector<BitMatrix> task;
    for (int l = 1; l <= 2; ++l) {
      BitMatrix m(static_cast<std::size_t>(widths[l]), static_cast<std::size_t>(widths[l - 1]));
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) m.set(r, c, rng.uniform() < 0.3);
      task.push_back(m);
    }
    archive.push_back(task);
  }
  const auto one = frozen_union(std::span(archive).first(1), widths);
  CHECK(one == archive[0]);
  const auto all = frozen_union(archive, widths);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t r = 0; r < all[l].rows(); ++r)
      for (std::size_t c = 0; c < all[l].cols(); ++c)
        CHECK(all[l].get(r, c) == (archive[0][l].get(r, c) || archive[1][l].get(r, c) || archive[2][l].get(r, c)));

  std::vector<std::vector<BitMatrix>> bad = {archive[0], {archive[1][0]}};
  CHECK_THROWS_AS(frozen_union(bad, widths), Error);
}

TEST_CASE("co-allocation structure") {
  const auto e = embedding_of(0, "push the puck to the left goal");
  const auto m = allocate_task(e, default_alloc(), kWidths);
  REQUIRE(m.layers() == 4);
  CHECK(m.phi[0].all());
  CHECK(m.phi[4].all());
  for (int l = 1; l < 4; ++l) {
    const auto i = static_cast<std::size_t>(l);
    auto either = m.phi_global[i];
    for (std::size_t b = 0; b < either.size(); ++b) either.set(b, m.phi_global[i].get(b) || m.phi_local[i].get(b));
    CHECK(m.phi[i] == either);
    CHECK(m.phi[i].popcount() >= 1);
    CHECK(m.phi_global[i].popcount() <= 64u);
    CHECK(m.phi_local[i].popcount() <= 64u);
    CHECK(m.local_seeds[i] == local_dictionary_seed(2024, 0, l));
  }
  // Reruns are identical.
  CHECK(allocate_task(e, default_alloc(), kWidths) == m);
}

TEST_CASE("identical embeddings share global masks but not local ones") {
  const auto a = embedding_of(0, "push the puck to the left goal");
  const auto b = embedding_of(1, "push the puck to the left goal");
  const auto ma = allocate_task(a, default_alloc(), kWidths);
  const auto mb = allocate_task(b, default_alloc(), kWidths);
  bool any_local_diff = false;
  for (std::size_t l = 1; l < 4; ++l) {
    CHECK(ma.phi_global[l] == mb.phi_global[l]);
    if (!(ma.phi_local[l] == mb.phi_local[l])) any_local_diff = true;
  }
  CHECK(any_local_diff);
}

TEST_CASE("global-only allocation drops the local component") {
  auto cfg = default_alloc();
  cfg.use_local = false;
  const auto m = allocate_task(embedding_of(2, "push the puck to the top goal"), cfg, kWidths);
  for (std::size_t l = 1; l < 4; ++l) {
    CHECK(m.phi_local[l].none());
    CHECK(m.phi[l] == m.phi_global[l]);
  }
}

TEST_CASE("pathological lambda leaves a layer empty and fails loudly") {
  auto cfg = default_alloc();
  cfg.lambda_global = cfg.lambda_local = 1e6;
  try {
    allocate_task(embedding_of(0, "push"), cfg, kWidths);
    FAIL("expected an allocation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::allocation);
  }
}

TEST_CASE("ledger snapshots, monotonicity and utilization") {
  const std::vector<int> widths{8, 64, 64, 4};
  FrozenLedger ledger(widths);
  CHECK(utilization(ledger) == 0.0);
  CHECK(ledger.current().weights[0].popcount() == 0);
  const auto suite = task_suite(4, 7);
  std::size_t prev = 0;
  double prev_util = 0.0;
  std::vector<MaskSet> all;
  for (const auto& s : suite) {
    const auto m = allocate_task(embedding_of(s.task_id, s.description), default_alloc(), widths);
    const auto before = ledger.current();
    ledger.commit(m);
    all.push_back(m);
    CHECK(ledger.pre_task(s.task_id) == before);
    // Psi_k contains Psi_{k-1} and the new task's parameter masks.
    const auto pm = param_masks(m);
    for (std::size_t l = 0; l < pm.size(); ++l)
      for (std::size_t r = 0; r < pm[l].rows(); ++r)
        for (std::size_t c = 0; c < pm[l].cols(); ++c) {
          if (before.weights[l].get(r, c)) CHECK(ledger.current().weights[l].get(r, c));
          if (pm[l].get(r, c)) CHECK(ledger.current().weights[l].get(r, c));
        }
    CHECK(ledger.frozen_weights() >= prev);
    prev = ledger.frozen_weights();
    CHECK(utilization(ledger) >= prev_util);
    prev_util = utilization(ledger);
    // Sparsity bound: density of the parameter mask is the product of neuron densities.
    for (int l = 1; l <= m.layers(); ++l) {
      const auto i = static_cast<std::size_t>(l);
      const double lhs = static_cast<double>(pm[i - 1].popcount()) / static_cast<double>(pm[i - 1].rows() * pm[i - 1].cols());
      const double rhs = static_cast<double>(m.phi[i].popcount()) / static_cast<double>(m.phi[i].size()) *
                         static_cast<double>(m.phi[i - 1].popcount()) / static_cast<double>(m.phi[i - 1].size());
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
  std::vector<std::vector<BitMatrix>> archive;
  for (const auto& m : all) archive.push_back(param_masks(m));
  CHECK(frozen_union(archive, widths) == ledger.current().weights);

  FrozenLedger dense(widths);
  MaskSet full;
  for (int w : widths) full.phi.push_back(BitVector::ones(static_cast<std::size_t>(w)));
  full.phi_global = full.phi_local = std::vector<BitVector>(widths.size());
  full.local_seeds.assign(widths.size(), 0);
  dense.commit(full);
  CHECK(utilization(dense) == 1.0);
}

TEST_CASE("mask similarity") {
  MaskSet a, b;
  for (auto* m : {&a, &b}) {
    m->phi = {BitVector::ones(2), BitVector(4), BitVector::ones(2)};
  }
  a.phi[1] = BitVector::from_string("1100");
  b.phi[1] = BitVector::from_string("1010");
  CHECK(mask_similarity(a, b, 1) == doctest::Approx(0.5));
  CHECK(mask_similarity(a, a, 1) == doctest::Approx(1.0));
  b.phi[1] = BitVector::from_string("0011");
  CHECK(mask_similarity(a, b, 1) == 0.0);
  b.phi[1] = BitVector(4);
  CHECK(mask_similarity(a, b, 1) == 0.0);
  CHECK(bit_cosine(BitVector::from_string("1100"), BitVector::from_string("1010")) == doctest::Approx(0.5));
}

TEST_CASE("similar descriptions get similar masks across the suite") {
  const auto suite = task_suite(10, 7);
  std::vector<MaskSet> masks;
  std::vector<TaskEmbedding> embs;
  for (const auto& s : suite) {
    embs.push_back(embedding_of(s.task_id, s.description));
    masks.push_back(allocate_task(embs.back(), default_alloc(), kWidths));
  }
  std::vector<double> ecos, mcos;
  for (std::size_t i = 0; i < suite.size(); ++i)
    for (std::size_t j = i + 1; j < suite.size(); ++j) {
      ecos.push_back(oracle::cosine(embs[i].values, embs[j].values));
      mcos.push_back(mask_similarity(masks[i], masks[j]));
    }
  CHECK(oracle::spearman(ecos, mcos) > 0.0);
}
