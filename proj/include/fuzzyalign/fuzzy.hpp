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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fuzzyalign/crossformer.hpp"
#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/ops.hpp"
#include "fuzzyalign/sdm.hpp"
#include "fuzzyalign/tape.hpp"

namespace fuzzyalign {

/// Two-layer scale predictor: linear -> GELU -> linear, scalar output.
/// The output layer starts at zero so the predicted scale starts at exp(0).
struct SigmaMlpParams {
  Matrix w1;  // D x H
  Matrix b1;  // 1 x H
  Matrix w2;  // H x 1
  Matrix b2;  // 1 x 1

  static SigmaMlpParams init(std::size_t dim, std::mt19937_64& rng) {
    return {Matrix::randn(dim, dim, kInitScale, rng), Matrix::zeros(1, dim),
            Matrix::zeros(dim, 1), Matrix::zeros(1, 1)};
  }
};

struct SigmaMlpVars {
  Var w1, b1, w2, b2;
};

inline SigmaMlpVars lift(Tape& tape, const SigmaMlpParams& p, bool trainable) {
  return {lift(tape, p.w1, trainable), lift(tape, p.b1, trainable),
          lift(tape, p.w2, trainable), lift(tape, p.b2, trainable)};
}

/// sigma = exp(MLP(class_token)); strictly positive by construction.
inline Var predict_sigma_graph(Tape& tape, Var class_row,
                               const SigmaMlpVars& mlp) {
  Var hidden = tape.gelu(tape.add(tape.matmul(class_row, mlp.w1), mlp.b1));
  return tape.exp(tape.add(tape.matmul(hidden, mlp.w2), mlp.b2));
}

inline double predict_sigma(const std::vector<double>& class_token,
                            const SigmaMlpParams& mlp) {
  Matrix row(1, class_token.size(), class_token);
  Matrix hidden = detail::matmul(row, mlp.w1);
  for (std::size_t j = 0; j < hidden.size(); ++j) {
    hidden[j] = gelu_value(hidden[j] + mlp.b1[j]);
  }
  Matrix out = detail::matmul(hidden, mlp.w2);
  return std::exp(out(0, 0) + mlp.b2(0, 0));
}

/// mu = exp(-(1 - r)^2 / (2 sigma^2)) with r the clamped cosine between the
/// query token and the class token.
inline double membership(std::span<const double> query_token,
                         std::span<const double> class_token, double sigma) {
  const double r = clamp_unit(cosine_sim(query_token, class_token));
  const double d = 1.0 - r;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

inline double membership(const std::vector<double>& query_token,
                         const std::vector<double>& class_token,
                         double sigma) {
  return membership(std::span<const double>(query_token),
                    std::span<const double>(class_token), sigma);
}

/// Memberships of all K query tokens against one class token; K x 1 node.
inline Var membership_graph(Tape& tape, Var queries, Var class_row,
                            Var sigma) {
  Var r = tape.clamp_unit(tape.matmul(
      tape.row_normalize(queries),
      tape.transpose(tape.row_normalize(class_row))));
  Var ones = tape.constant(Matrix(queries.rows(), 1, 1.0));
  Var gap = tape.sub(ones, r);
  Var denom = tape.matmul(ones, tape.scale(tape.mul(sigma, sigma), 2.0));
  return tape.exp(tape.scale(tape.div(tape.mul(gap, gap), denom), -1.0));
}

/// Soft AND: elementwise product.
inline std::vector<double> fuzzy_and(const std::vector<double>& mu_a,
                                     const std::vector<double>& mu_t) {
  if (mu_a.size() != mu_t.size()) {
    throw ShapeError("fuzzy_and: vector lengths disagree");
  }
  std::vector<double> out(mu_a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu_a[i] * mu_t[i];
  return out;
}

/// (1/K) sum_j mu_joint[j] * cos(qa_j, qt_j). A zero membership removes the
/// token's contribution exactly, whatever its content.
inline double weighted_similarity(const Matrix& qa, const Matrix& qt,
                                  const std::vector<double>& mu_joint) {
  if (!qa.same_shape(qt) || qa.rows() != mu_joint.size()) {
    throw ShapeError("weighted_similarity: shapes disagree");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < qa.rows(); ++j) {
    if (mu_joint[j] == 0.0) continue;
    acc += mu_joint[j] * cosine_sim_rows(qa, j, qt, j);
  }
  return acc / static_cast<double>(qa.rows());
}

/// Learnable state of the token alignment module: the shared query, the
/// interaction block, and one scale predictor per modality.
struct FtaParams {
  Matrix query;  // K x D
  CrossFormerParams former;
  SigmaMlpParams sigma_text;
  SigmaMlpParams sigma_aerial;

  static FtaParams init(std::size_t dim, std::size_t query_tokens,
                        std::size_t self_blocks, std::mt19937_64& rng) {
    FtaParams p;
    p.query = Matrix::randn(query_tokens, dim, kInitScale, rng);
    p.former = CrossFormerParams::init(dim, self_blocks, rng);
    p.sigma_text = SigmaMlpParams::init(dim, rng);
    p.sigma_aerial = SigmaMlpParams::init(dim, rng);
    return p;
  }
};

struct FtaVars {
  Var query;
  CrossFormerVars former;
  SigmaMlpVars sigma_text;
  SigmaMlpVars sigma_aerial;
};

inline FtaVars lift(Tape& tape, const FtaParams& p, bool trainable) {
  return {lift(tape, p.query, trainable), lift(tape, p.former, trainable),
          lift(tape, p.sigma_text, trainable),
          lift(tape, p.sigma_aerial, trainable)};
}

/// Visits every learnable tensor with a stable name. Works on FtaParams
/// (Matrix fields) and FtaVars (Var fields) alike; checkpointing and the
/// optimizer both rely on this order.
template <typename T, typename F>
void visit_fta(T& p, F&& f) {
  f("query", p.query);
  f("cross.wq", p.former.cross.wq);
  f("cross.wk", p.former.cross.wk);
  f("cross.wv", p.former.cross.wv);
  f("cross.wo", p.former.cross.wo);
  for (std::size_t i = 0; i < p.former.blocks.size(); ++i) {
    auto& blk = p.former.blocks[i];
    const std::string base = "self" + std::to_string(i) + ".";
    f(base + "attn.wq", blk.attn.wq);
    f(base + "attn.wk", blk.attn.wk);
    f(base + "attn.wv", blk.attn.wv);
    f(base + "attn.wo", blk.attn.wo);
    f(base + "ffn.w1", blk.ffn.w1);
    f(base + "ffn.b1", blk.ffn.b1);
    f(base + "ffn.w2", blk.ffn.w2);
    f(base + "ffn.b2", blk.ffn.b2);
  }
  f("sigma_text.w1", p.sigma_text.w1);
  f("sigma_text.b1", p.sigma_text.b1);
  f("sigma_text.w2", p.sigma_text.w2);
  f("sigma_text.b2", p.sigma_text.b2);
  f("sigma_aerial.w1", p.sigma_aerial.w1);
  f("sigma_aerial.b1", p.sigma_aerial.b1);
  f("sigma_aerial.w2", p.sigma_aerial.w2);
  f("sigma_aerial.b2", p.sigma_aerial.b2);
}

/// One modality side of a sample pushed through the interaction module.
struct TokenSide {
  Var queries;     // K x D crossformer output
  Var membership;  // K x 1
  Var sigma;       // 1 x 1
};

inline TokenSide token_side(Tape& tape, Var tokens, Var query,
                            const CrossFormerVars& former,
                            const SigmaMlpVars& mlp) {
  Var out = crossformer_graph(tape, query, tokens, former);
  const double inv_n = 1.0 / static_cast<double>(tokens.rows());
  Var class_row = tape.scale(
      tape.matmul(tape.constant(Matrix(1, tokens.rows(), 1.0)), tokens),
      inv_n);
  Var sigma = predict_sigma_graph(tape, class_row, mlp);
  Var mu = membership_graph(tape, out, class_row, sigma);
  return {out, mu, sigma};
}

struct FtaSimilarityGraph {
  Var similarity;  // B x B; row i = aerial sample i, column j = text sample j
  Var mu_aerial;   // B x K
  Var mu_text;     // B x K
};

/// Builds the batch similarity matrix. Entry (i, j) weights each query
/// token's cosine between sample i's aerial queries and sample j's text
/// queries by the product of the two sides' memberships, then averages
/// over tokens.
inline FtaSimilarityGraph fta_similarity_graph(
    Tape& tape, const std::vector<Var>& aerial_tokens,
    const std::vector<Var>& text_tokens, const FtaVars& vars) {
  const std::size_t b = aerial_tokens.size();
  if (b != text_tokens.size() || b < 1) {
    throw ShapeError("fta: token batches disagree");
  }
  const std::size_t k = vars.query.rows();

  std::vector<Var> qa_parts, qt_parts, mua_rows, mut_rows;
  qa_parts.reserve(b);
  qt_parts.reserve(b);
  mua_rows.reserve(b);
  mut_rows.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    TokenSide aerial = token_side(tape, aerial_tokens[i], vars.query,
                                  vars.former, vars.sigma_aerial);
    TokenSide text = token_side(tape, text_tokens[i], vars.query, vars.former,
                                vars.sigma_text);
    qa_parts.push_back(aerial.queries);
    qt_parts.push_back(text.queries);
    mua_rows.push_back(tape.transpose(aerial.membership));
    mut_rows.push_back(tape.transpose(text.membership));
  }

  Var qa_norm = tape.row_normalize(tape.concat_rows(qa_parts));  // BK x D
  Var qt_norm = tape.row_normalize(tape.concat_rows(qt_parts));
  Var mu_a = tape.concat_rows(mua_rows);  // B x K
  Var mu_t = tape.concat_rows(mut_rows);

  Var sim_sum;
  for (std::size_t t = 0; t < k; ++t) {
    Matrix select(b, b * k);  // picks token t of every sample
    for (std::size_t i = 0; i < b; ++i) select(i, i * k + t) = 1.0;
    Var sel = tape.constant(select);
    Var cos_t = tape.matmul(tape.matmul(sel, qa_norm),
                            tape.transpose(tape.matmul(sel, qt_norm)));
    Matrix pick(k, 1);
    pick(t, 0) = 1.0;
    Var e_t = tape.constant(pick);
    Var weight_t = tape.matmul(tape.matmul(mu_a, e_t),
                               tape.transpose(tape.matmul(mu_t, e_t)));
    Var term = tape.mul(weight_t, cos_t);
    sim_sum = t == 0 ? term : tape.add(sim_sum, term);
  }
  Var similarity = tape.scale(sim_sum, 1.0 / static_cast<double>(k));
  return {similarity, mu_a, mu_t};
}

inline Var fta_loss_from_similarity(Tape& tape, Var similarity,
                                    const std::vector<std::uint32_t>& ids,
                                    double tau, double eps) {
  return sdm_graph_from_similarity(tape, similarity, ids, ids, tau, eps)
      .total;
}

struct FtaResult {
  double loss = 0.0;
  Matrix similarity;
  Matrix mu_aerial;
  Matrix mu_text;
  FtaParams grads;  // same layout as the parameters
};

/// Standalone loss over raw token features; gradients cover every learnable
/// tensor of the module.
inline FtaResult fta_loss(const std::vector<Matrix>& text_tokens,
                          const std::vector<Matrix>& aerial_tokens,
                          const std::vector<std::uint32_t>& identities,
                          const FtaParams& params, double tau, double eps) {
  if (text_tokens.size() != identities.size() ||
      aerial_tokens.size() != identities.size()) {
    throw ShapeError("fta_loss: batch sizes disagree");
  }
  Tape tape;
  FtaVars vars = lift(tape, params, true);
  std::vector<Var> text_vars, aerial_vars;
  text_vars.reserve(text_tokens.size());
  aerial_vars.reserve(aerial_tokens.size());
  for (const Matrix& m : text_tokens) text_vars.push_back(tape.constant(m));
  for (const Matrix& m : aerial_tokens) aerial_vars.push_back(tape.constant(m));

  FtaSimilarityGraph sim =
      fta_similarity_graph(tape, aerial_vars, text_vars, vars);
  Var loss = fta_loss_from_similarity(tape, sim.similarity, identities, tau,
                                      eps);

  std::vector<Var> wrt;
  visit_fta(vars, [&](const std::string&, Var v) { wrt.push_back(v); });
  std::vector<Matrix> grads = tape.gradients(loss, wrt);

  FtaResult result;
  result.loss = loss.item();
  result.similarity = sim.similarity.value();
  result.mu_aerial = sim.mu_aerial.value();
  result.mu_text = sim.mu_text.value();
  result.grads = params;
  std::size_t slot = 0;
  visit_fta(result.grads,
            [&](const std::string&, Matrix& m) { m = grads[slot++]; });
  return result;
}

}  // namespace fuzzyalign
