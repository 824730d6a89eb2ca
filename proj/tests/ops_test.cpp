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
#include "fuzzyalign/commands.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/ops.hpp"
#include "oracles.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinULP;
using namespace fuzzyalign;

TEST_CASE("matrix basics") {
  Matrix m(2, 3, 1.5);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 1.5);
  m(0, 1) = -2.0;
  CHECK(m[1] == -2.0);

  const Matrix id = Matrix::identity(3);
  CHECK(id(0, 0) == 1.0);
  CHECK(id(0, 1) == 0.0);

  const Matrix lit{{1.0, 2.0}, {3.0, 4.0}};
  CHECK(lit(1, 0) == 3.0);
  CHECK(lit == Matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
}

TEST_CASE("matrix matmul against hand results") {
  const Matrix a{{1.0, 2.0}, {3.0, 4.0}};
  const Matrix b{{5.0, 6.0}, {7.0, 8.0}};
  const Matrix ab = detail::matmul(a, b);
  CHECK(ab == Matrix{{19.0, 22.0}, {43.0, 50.0}});

  const Matrix abt = detail::matmul(a, b, false, true);
  CHECK(abt == Matrix{{17.0, 23.0}, {39.0, 53.0}});

  const Matrix atb = detail::matmul(a, b, true, false);
  CHECK(atb == Matrix{{26.0, 30.0}, {38.0, 44.0}});
}

TEST_CASE("cosine similarity basics") {
  CHECK(cosine_sim({1.0, 0.0}, {0.0, 1.0}) == 0.0);
  CHECK(cosine_sim({2.0, 0.0}, {5.0, 0.0}) == 1.0);
  CHECK(cosine_sim({1.0, 0.0}, {-3.0, 0.0}) == -1.0);
  CHECK_THAT(cosine_sim({1.0, 1.0}, {1.0, 0.0}),
             WithinULP(1.0 / std::sqrt(2.0), 4));

  CHECK_THROWS_AS(cosine_sim({1.0}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(cosine_sim(std::vector<double>{}, std::vector<double>{}),
                  ShapeError);
  CHECK_THROWS_AS(cosine_sim({1e-13, 0.0}, {1.0, 0.0}), ZeroNormError);
}

TEST_CASE("clamp_unit") {
  CHECK(clamp_unit(1.5) == 1.0);
  CHECK(clamp_unit(-2.0) == -1.0);
  CHECK(clamp_unit(0.3) == 0.3);
  CHECK(clamp_unit(1.0) == 1.0);
}

TEST_CASE("sigmoid closed forms") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(0.0, 16.0) == 0.5);
  CHECK_THAT(sigmoid(1.0), WithinULP(oracle::kSigmoid1, 2));
  CHECK_THAT(sigmoid(2.5, 4.0), WithinULP(oracle::kSigmoid10, 2));
  CHECK_THAT(sigmoid(-2.5, 4.0), WithinULP(oracle::kSigmoidNeg10, 2));
  CHECK_THAT(sigmoid(-2.0, 4.0), WithinULP(oracle::kSigmoidNeg8, 2));

  for (double x : {-30.0, -3.0, 0.25, 7.0, 40.0}) {
    CHECK_THAT(sigmoid(x) + sigmoid(-x), WithinULP(1.0, 2));
  }
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(sigmoid(1000.0) == 1.0);
}

TEST_CASE("softmax_row") {
  const std::vector<double> p = softmax_row({1.0, 0.0});
  REQUIRE(p.size() == 2);
  CHECK_THAT(p[0], WithinULP(oracle::kSoftmaxPair1, 2));
  CHECK_THAT(p[1], WithinULP(oracle::kSoftmaxPair0, 2));
  CHECK_THAT(p[0] + p[1], WithinULP(1.0, 2));

  SECTION("shift invariance is exact for representable shifts") {
    const std::vector<double> base = softmax_row({0.5, 0.25, -0.75}, 0.5);
    const std::vector<double> shifted = softmax_row({2.5, 2.25, 1.25}, 0.5);
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(base[i] == shifted[i]);
    }
  }

  SECTION("sharpens as tau shrinks") {
    const std::vector<double> soft = softmax_row({1.0, 0.0}, 1.0);
    const std::vector<double> sharp = softmax_row({1.0, 0.0}, 0.1);
    CHECK(sharp[0] > soft[0]);
  }

  CHECK_THROWS_AS(softmax_row(std::vector<double>{}), ShapeError);
}

TEST_CASE("gelu value and derivative") {
  CHECK(gelu_value(0.0) == 0.0);
  CHECK_THAT(gelu_value(10.0), WithinAbs(10.0, 1e-12));
  CHECK_THAT(gelu_value(-10.0), WithinAbs(0.0, 1e-12));
  CHECK_THAT(gelu_value(1.0) - gelu_value(-1.0), WithinULP(1.0, 8));

  for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
    const double h = 1e-6;
    const double fd = (gelu_value(x + h) - gelu_value(x - h)) / (2.0 * h);
    CHECK_THAT(gelu_derivative(x), WithinAbs(fd, 1e-8));
  }
}

TEST_CASE("kl_weighted_sum") {
  const Matrix uniform{{0.5, 0.5}};
  CHECK(kl_weighted_sum(uniform, uniform, 0.0) == 0.0);

  const Matrix point{{1.0, 0.0}};
  CHECK_THAT(kl_weighted_sum(point, uniform, 0.0),
             WithinULP(oracle::kLogTwo, 2));

  SECTION("zero p entries contribute nothing even against zero q") {
    const Matrix q{{1.0, 0.0}};
    CHECK_THAT(kl_weighted_sum(point, q, 0.0), WithinAbs(0.0, 0.0));
  }

  SECTION("eps pads q") {
    const Matrix q{{0.0, 1.0}};
    const double v = kl_weighted_sum(point, q, 0.25);
    CHECK_THAT(v, WithinULP(std::log(4.0), 4));
  }

  CHECK_THROWS_AS(kl_weighted_sum(Matrix(1, 2, 0.5), Matrix(2, 1, 0.5), 0.0),
                  ShapeError);
}

TEST_CASE("row norms and transpose helpers") {
  const Matrix m{{3.0, 4.0}, {0.0, 2.0}};
  CHECK(detail::row_l2_norm(m, 0) == 5.0);
  CHECK(detail::row_l2_norm(m, 1) == 2.0);
  CHECK(detail::transpose(m) == Matrix{{3.0, 0.0}, {4.0, 2.0}});
}

TEST_CASE("randn is deterministic per seed") {
  std::mt19937_64 a(7), b(7), c(8);
  const Matrix m1 = Matrix::randn(3, 4, 0.5, a);
  const Matrix m2 = Matrix::randn(3, 4, 0.5, b);
  const Matrix m3 = Matrix::randn(3, 4, 0.5, c);
  CHECK(m1 == m2);
  CHECK_FALSE(m1 == m3);
}

TEST_CASE("require_finite flags bad entries") {
  Matrix m(1, 2, 1.0);
  CHECK_NOTHROW(m.require_finite("ok"));
  m(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(m.require_finite("bad"), NonFiniteError);
}
