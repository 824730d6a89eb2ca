// Copyright 2026 the fuzzyalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <random>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "fuzzyalign/grad_check.hpp"
#include "fuzzyalign/sdm.hpp"
#include "oracles.hpp"

using Catch::Matchers::WithinAbs;
using namespace fuzzyalign;

namespace {

constexpr double kTau = 0.5;
constexpr double kEps = 1e-8;

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(perm[r], c);
  }
  return out;
}

}  // namespace

TEST_CASE("label distribution splits mass across positives") {
  const Matrix q = label_distribution({0, 1, 0}, {0, 0, 1});
  CHECK(q == Matrix{{0.5, 0.5, 0.0}, {0.0, 0.0, 1.0}, {0.5, 0.5, 0.0}});
}

TEST_CASE("label distribution rejects rows without positives") {
  CHECK_THROWS_AS(label_distribution({0, 7}, {0, 0}), NoPositiveError);
}

TEST_CASE("pairwise cosine matches scalar cosines") {
  std::mt19937_64 rng(11);
  const Matrix a = Matrix::randn(3, 5, 1.0, rng);
  const Matrix b = Matrix::randn(4, 5, 1.0, rng);
  const Matrix sim = pairwise_cosine(a, b);
  REQUIRE(sim.rows() == 3);
  REQUIRE(sim.cols() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK_THAT(sim(i, j), WithinAbs(cosine_sim_rows(a, i, b, j), 1e-12));
    }
  }
}

TEST_CASE("identical distributions give exactly zero loss") {
  // Both rows are the same vector, so every similarity is 1, the predicted
  // distribution is exactly uniform, and it matches the label distribution.
  const Matrix f{{1.0, 0.0}, {1.0, 0.0}};
  const SdmResult r = sdm(f, f, {3, 3}, kTau, 0.0);
  CHECK(r.loss == 0.0);
  for (std::size_t i = 0; i < r.grad_a.size(); ++i) {
    CHECK_THAT(r.grad_a[i], WithinAbs(0.0, 1e-12));
  }
}

TEST_CASE("loss agrees with the independent evaluation") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t b = 2 + static_cast<std::size_t>(trial % 3);
    const std::size_t d = 4 + 4 * static_cast<std::size_t>(trial % 2);
    const Matrix a = Matrix::randn(b, d, 1.0, rng);
    const Matrix c = Matrix::randn(b, d, 1.0, rng);
    std::vector<std::uint32_t> ids(b);
    for (std::size_t i = 0; i < b; ++i) {
      ids[i] = static_cast<std::uint32_t>(i % 2);
    }
    const SdmResult got = sdm(a, c, ids, kTau, kEps);
    const oracle::SdmEval want =
        oracle::sdm(oracle::from_matrix(a), oracle::from_matrix(c), ids, kTau,
                    kEps);
    CHECK_THAT(got.loss,
               WithinAbs(want.total, 1e-10 * std::max(1.0, std::abs(want.total))));
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        CHECK_THAT(got.p(i, j), WithinAbs(want.p[i][j], 1e-12));
      }
    }
  }
}

TEST_CASE("per-sample terms sum to the total") {
  std::mt19937_64 rng(7);
  Tape tape;
  Var a = tape.input(Matrix::randn(4, 6, 1.0, rng));
  Var b = tape.input(Matrix::randn(4, 6, 1.0, rng));
  const SdmGraph g = sdm_graph(tape, a, b, {0, 1, 1, 0}, kTau, kEps);
  REQUIRE(g.per_sample.rows() == 4);
  REQUIRE(g.per_sample.cols() == 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < 4; ++i) acc += g.per_sample.value()(i, 0);
  CHECK_THAT(acc, WithinAbs(g.total.item(), 1e-12));
}

TEST_CASE("loss is invariant to batch permutation") {
  std::mt19937_64 rng(13);
  const Matrix a = Matrix::randn(4, 5, 1.0, rng);
  const Matrix b = Matrix::randn(4, 5, 1.0, rng);
  const std::vector<std::uint32_t> ids{0, 1, 2, 0};
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<std::uint32_t> pids(4);
  for (std::size_t i = 0; i < 4; ++i) pids[i] = ids[perm[i]];

  const double base = sdm(a, b, ids, kTau, kEps).loss;
  const double shuffled =
      sdm(permute_rows(a, perm), permute_rows(b, perm), pids, kTau, kEps).loss;
  CHECK_THAT(shuffled, WithinAbs(base, 1e-11));
}

TEST_CASE("loss ignores per-row feature scale") {
  std::mt19937_64 rng(29);
  const Matrix a = Matrix::randn(3, 4, 1.0, rng);
  const Matrix b = Matrix::randn(3, 4, 1.0, rng);
  const std::vector<std::uint32_t> ids{0, 1, 1};
  const double base = sdm(a, b, ids, kTau, kEps).loss;

  SECTION("power-of-two scaling is bit exact") {
    Matrix a4 = a;
    for (std::size_t i = 0; i < a4.size(); ++i) a4[i] *= 4.0;
    CHECK(sdm(a4, b, ids, kTau, kEps).loss == base);
  }
  SECTION("general positive scaling matches to rounding") {
    Matrix a3 = a;
    for (std::size_t i = 0; i < a3.size(); ++i) a3[i] *= 3.0;
    CHECK_THAT(sdm(a3, b, ids, kTau, kEps).loss, WithinAbs(base, 1e-10));
  }
}

TEST_CASE("asymmetric identity sets route through row and column ids") {
  std::mt19937_64 rng(31);
  Tape tape;
  Var sim = tape.input(Matrix::randn(2, 3, 0.3, rng));
  CHECK_NOTHROW(
      sdm_graph_from_similarity(tape, sim, {0, 1}, {1, 0, 0}, kTau, kEps));
  Tape tape2;
  Var sim2 = tape2.input(Matrix::randn(2, 3, 0.3, rng));
  CHECK_THROWS_AS(
      sdm_graph_from_similarity(tape2, sim2, {0, 2}, {0, 0, 0}, kTau, kEps),
      NoPositiveError);
}

TEST_CASE("degenerate inputs are rejected") {
  const Matrix one(1, 4, 1.0);
  CHECK_THROWS_AS(sdm(one, one, {0}, kTau, kEps), ShapeError);

  const Matrix a(2, 4, 1.0);
  const Matrix b(3, 4, 1.0);
  CHECK_THROWS_AS(sdm(a, b, {0, 1}, kTau, kEps), ShapeError);

  Matrix zero_row(2, 4, 1.0);
  for (std::size_t c = 0; c < 4; ++c) zero_row(1, c) = 0.0;
  CHECK_THROWS_AS(sdm(zero_row, a, {0, 1}, kTau, kEps), ZeroNormError);
}

TEST_CASE("one-hot targets with zero eps blow up") {
  // log(q + 0) hits log(0) on every negative pair.
  std::mt19937_64 rng(17);
  const Matrix a = Matrix::randn(2, 4, 1.0, rng);
  const Matrix b = Matrix::randn(2, 4, 1.0, rng);
  CHECK_THROWS_AS(sdm(a, b, {0, 1}, kTau, 0.0), NonFiniteError);
}

TEST_CASE("gradients pass finite-difference checks") {
  std::mt19937_64 rng(23);
  for (std::size_t b : {2, 3, 4}) {
    for (std::size_t d : {4, 8}) {
      Tape tape;
      Var fa = tape.input(Matrix::randn(b, d, 1.0, rng));
      Var fb = tape.input(Matrix::randn(b, d, 1.0, rng));
      std::vector<std::uint32_t> ids(b);
      for (std::size_t i = 0; i < b; ++i) {
        ids[i] = static_cast<std::uint32_t>(i % 2);
      }
      const SdmGraph g = sdm_graph(tape, fa, fb, ids, kTau, kEps);
      CHECK(grad_check(tape, g.total, {fa, fb}) <= 1e-4);
    }
  }
}

TEST_CASE("standalone result exposes gradients that drive the loss down") {
  std::mt19937_64 rng(53);
  Matrix a = Matrix::randn(3, 6, 1.0, rng);
  Matrix b = Matrix::randn(3, 6, 1.0, rng);
  const std::vector<std::uint32_t> ids{0, 1, 2};
  const SdmResult r = sdm(a, b, ids, kTau, kEps);
  const double lr = 0.05;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= lr * r.grad_a[i];
  for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * r.grad_b[i];
  CHECK(sdm(a, b, ids, kTau, kEps).loss < r.loss);
}
