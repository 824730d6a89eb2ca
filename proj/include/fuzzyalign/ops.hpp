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

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"

namespace fuzzyalign {

/// Norms below this are treated as degenerate embeddings.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Cosine similarity of two equal-length vectors.
///
/// Throws ZeroNormError when either norm is below kZeroNormThreshold; a
/// degenerate embedding is a bug upstream, not a zero similarity.
inline double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("cosine_sim operands must share a dimension >= 1");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kZeroNormThreshold || nb < kZeroNormThreshold) {
    throw ZeroNormError("cosine_sim: vector norm below 1e-12");
  }
  return dot / (na * nb);
}

inline double cosine_sim(const std::vector<double>& a,
                         const std::vector<double>& b) {
  return cosine_sim(std::span<const double>(a), std::span<const double>(b));
}

/// Cosine similarity between row ra of a and row rb of b.
inline double cosine_sim_rows(const Matrix& a, std::size_t ra, const Matrix& b,
                              std::size_t rb) {
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_sim_rows: column counts disagree");
  }
  return cosine_sim(
      std::span<const double>(a.data().data() + ra * a.cols(), a.cols()),
      std::span<const double>(b.data().data() + rb * b.cols(), b.cols()));
}

/// Clamp a cosine value into [-1, 1]; rounding can push it a few ulp out.
inline double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

/// Exact (erf-based) GELU and its derivative.
inline double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

/// Logistic gate 1 / (1 + exp(-k*x)), branch on sign so exp never overflows.
inline double sigmoid(double x, double k = 1.0) {
  const double z = k * x;
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Max-stabilized softmax of logits / tau.
inline std::vector<double> softmax_row(std::span<const double> logits,
                                       double tau = 1.0) {
  if (logits.empty()) {
    throw ShapeError("softmax_row: empty logits");
  }
  std::vector<double> out(logits.size());
  double hi = logits[0];
  for (double v : logits) hi = std::max(hi, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - hi) / tau);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline std::vector<double> softmax_row(const std::vector<double>& logits,
                                       double tau = 1.0) {
  return softmax_row(std::span<const double>(logits), tau);
}

/// Sum over all entries of p * log(p / (q + eps)).
///
/// Rows of p are expected to be probability vectors; entries with p == 0
/// contribute zero (the x*log(x) limit). The eps guard is applied to q only.
inline double kl_weighted_sum(const Matrix& p, const Matrix& q, double eps) {
  if (!p.same_shape(q)) {
    throw ShapeError("kl_weighted_sum: p and q shapes disagree");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    acc += pi * std::log(pi / (q[i] + eps));
  }
  return acc;
}

}  // namespace fuzzyalign
