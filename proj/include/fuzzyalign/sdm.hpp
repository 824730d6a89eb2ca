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

#include <cstdint>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/ops.hpp"
#include "fuzzyalign/tape.hpp"

namespace fuzzyalign {

/// Paired feature batch with identity supervision.
struct LabeledBatch {
  Matrix features_a;  // B x D
  Matrix features_b;  // B x D
  std::vector<std::uint32_t> identities;
};

/// Entry (i, j) = cosine similarity of row i of a and row j of b.
inline Matrix pairwise_cosine(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("pairwise_cosine: dimensions disagree");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = cosine_sim_rows(a, i, b, j);
    }
  }
  return out;
}

/// q_{i,j} = y_{i,j} / sum_k y_{i,k} with y_{i,j} = [ids_row[i] == ids_col[j]].
/// Throws NoPositive if some row of y is all-zero.
inline Matrix label_distribution(const std::vector<std::uint32_t>& ids_row,
                                 const std::vector<std::uint32_t>& ids_col) {
  Matrix q(ids_row.size(), ids_col.size());
  for (std::size_t i = 0; i < ids_row.size(); ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < ids_col.size(); ++j) {
      q(i, j) = ids_row[i] == ids_col[j] ? 1.0 : 0.0;
      row_sum += q(i, j);
    }
    if (row_sum == 0.0) {
      throw NoPositiveError("label row " + std::to_string(i) +
                            " has no positive match in the batch");
    }
    for (std::size_t j = 0; j < ids_col.size(); ++j) q(i, j) /= row_sum;
  }
  return q;
}

/// Match-term decomposition of the similarity distribution matching loss.
struct SdmGraph {
  Var p;           // B x B row-softmax of similarities over tau
  Var match;       // B x B, entry (i,j) = p_ij log(p_ij / (q_ij + eps))
  Var total;       // 1 x 1 sum over all match entries
  Var per_sample;  // B x 1; row i gets half its row plus half its column
                   // (whole row when the similarity matrix is not square)
};

/// Builds the loss on an existing tape from a precomputed similarity node.
/// The symmetric two-direction sum collapses to the plain sum over the match
/// matrix, and the per-sample attribution splits each entry evenly between
/// its row and column sample so the attributions add back up to the total.
inline SdmGraph sdm_graph_from_similarity(
    Tape& tape, Var similarity, const std::vector<std::uint32_t>& ids_row,
    const std::vector<std::uint32_t>& ids_col, double tau, double eps) {
  if (similarity.rows() != ids_row.size() ||
      similarity.cols() != ids_col.size()) {
    throw ShapeError("sdm: similarity shape does not match identity counts");
  }
  if (ids_row.size() < 2) {
    throw ShapeError("sdm: batch must hold at least 2 samples");
  }
  Matrix log_q_eps = label_distribution(ids_row, ids_col);
  for (auto& v : log_q_eps.data()) v = std::log(v + eps);

  Var p = tape.softmax_rows(similarity, tau);
  Var match = tape.mul(p, tape.sub(tape.log(p), tape.constant(log_q_eps)));
  Var total = tape.sum(match);
  // Non-square batches cannot pair rows with columns, so each row keeps its
  // full row sum; either way the attributions add back up to the total.
  Var per_sample =
      ids_row.size() == ids_col.size()
          ? tape.scale(tape.add(tape.row_sum(match),
                                tape.transpose(tape.col_sum(match))),
                       0.5)
          : tape.row_sum(match);
  return SdmGraph{p, match, total, per_sample};
}

/// Cosine-similarity specialization over two feature nodes.
inline SdmGraph sdm_graph(Tape& tape, Var features_a, Var features_b,
                          const std::vector<std::uint32_t>& identities,
                          double tau, double eps) {
  Var sim = tape.matmul(tape.row_normalize(features_a),
                        tape.transpose(tape.row_normalize(features_b)));
  return sdm_graph_from_similarity(tape, sim, identities, identities, tau,
                                   eps);
}

struct SdmResult {
  double loss = 0.0;
  Matrix grad_a;
  Matrix grad_b;
  Matrix p;  // row-softmax of similarities, kept for diagnostics
};

/// Standalone loss with gradients for both feature sides.
inline SdmResult sdm(const LabeledBatch& batch, double tau, double eps) {
  if (batch.features_a.rows() != batch.identities.size() ||
      !batch.features_a.same_shape(batch.features_b)) {
    throw ShapeError("sdm: batch fields disagree on shape");
  }
  Tape tape;
  Var a = tape.input(batch.features_a);
  Var b = tape.input(batch.features_b);
  SdmGraph graph = sdm_graph(tape, a, b, batch.identities, tau, eps);
  std::vector<Matrix> grads = tape.gradients(graph.total, {a, b});

  SdmResult result;
  result.loss = graph.total.item();
  result.grad_a = std::move(grads[0]);
  result.grad_b = std::move(grads[1]);
  result.p = graph.p.value();
  return result;
}

inline SdmResult sdm(const Matrix& features_a, const Matrix& features_b,
                     const std::vector<std::uint32_t>& identities, double tau,
                     double eps) {
  return sdm(LabeledBatch{features_a, features_b, identities}, tau, eps);
}

}  // namespace fuzzyalign
