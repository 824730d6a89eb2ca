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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/tape.hpp"

namespace fuzzyalign {

inline constexpr double kInitScale = 0.02;

struct AttentionBlockParams {
  Matrix wq, wk, wv, wo;  // each D x D

  static AttentionBlockParams init(std::size_t dim, std::mt19937_64& rng) {
    return {Matrix::randn(dim, dim, kInitScale, rng),
            Matrix::randn(dim, dim, kInitScale, rng),
            Matrix::randn(dim, dim, kInitScale, rng),
            Matrix::randn(dim, dim, kInitScale, rng)};
  }
};

struct FeedForwardParams {
  Matrix w1;  // D x H
  Matrix b1;  // 1 x H
  Matrix w2;  // H x D
  Matrix b2;  // 1 x D

  static FeedForwardParams init(std::size_t dim, std::mt19937_64& rng) {
    const std::size_t hidden = 4 * dim;
    return {Matrix::randn(dim, hidden, kInitScale, rng),
            Matrix::zeros(1, hidden), Matrix::randn(hidden, dim, kInitScale, rng),
            Matrix::zeros(1, dim)};
  }
};

struct SelfBlockParams {
  AttentionBlockParams attn;
  FeedForwardParams ffn;
};

/// One cross-attention readout followed by self_blocks pre-norm
/// self-attention and feed-forward layers, single head throughout.
struct CrossFormerParams {
  AttentionBlockParams cross;
  std::vector<SelfBlockParams> blocks;
  double ln_eps = 1e-5;

  static CrossFormerParams init(std::size_t dim, std::size_t self_blocks,
                                std::mt19937_64& rng) {
    CrossFormerParams p;
    p.cross = AttentionBlockParams::init(dim, rng);
    p.blocks.reserve(self_blocks);
    for (std::size_t i = 0; i < self_blocks; ++i) {
      p.blocks.push_back(SelfBlockParams{AttentionBlockParams::init(dim, rng),
                                         FeedForwardParams::init(dim, rng)});
    }
    return p;
  }
};

struct AttentionBlockVars {
  Var wq, wk, wv, wo;
};

struct SelfBlockVars {
  AttentionBlockVars attn;
  struct {
    Var w1, b1, w2, b2;
  } ffn;
};

struct CrossFormerVars {
  AttentionBlockVars cross;
  std::vector<SelfBlockVars> blocks;
  double ln_eps = 1e-5;
};

inline Var lift(Tape& tape, const Matrix& m, bool trainable) {
  return trainable ? tape.input(m) : tape.constant(m);
}

inline AttentionBlockVars lift(Tape& tape, const AttentionBlockParams& p,
                               bool trainable) {
  return {lift(tape, p.wq, trainable), lift(tape, p.wk, trainable),
          lift(tape, p.wv, trainable), lift(tape, p.wo, trainable)};
}

inline CrossFormerVars lift(Tape& tape, const CrossFormerParams& p,
                            bool trainable) {
  CrossFormerVars v;
  v.cross = lift(tape, p.cross, trainable);
  v.ln_eps = p.ln_eps;
  for (const SelfBlockParams& blk : p.blocks) {
    SelfBlockVars bv;
    bv.attn = lift(tape, blk.attn, trainable);
    bv.ffn = {lift(tape, blk.ffn.w1, trainable), lift(tape, blk.ffn.b1, trainable),
              lift(tape, blk.ffn.w2, trainable), lift(tape, blk.ffn.b2, trainable)};
    v.blocks.push_back(bv);
  }
  return v;
}

/// Scaled dot-product attention of queries over keys/values, one head.
/// queries: K x D node, context: N x D node; result K x D.
inline Var attention(Tape& tape, Var queries, Var context,
                     const AttentionBlockVars& p) {
  const auto dim = static_cast<double>(queries.cols());
  Var q = tape.matmul(queries, p.wq);
  Var k = tape.matmul(context, p.wk);
  Var v = tape.matmul(context, p.wv);
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                          1.0 / std::sqrt(dim));
  Var weights = tape.softmax_rows(scores);
  return tape.matmul(tape.matmul(weights, v), p.wo);
}

/// Query tokens read the context once through cross-attention (the readout
/// replaces the queries; no residual), then run through the self blocks with
/// residual connections and pre-normalization.
inline Var crossformer_graph(Tape& tape, Var query, Var context,
                             const CrossFormerVars& p) {
  if (query.cols() != context.cols()) {
    throw ShapeError("crossformer: query and context dims disagree");
  }
  Var x = attention(tape, query, context, p.cross);
  for (const SelfBlockVars& blk : p.blocks) {
    Var normed = tape.layer_norm_rows(x, p.ln_eps);
    x = tape.add(x, attention(tape, normed, normed, blk.attn));
    Var h = tape.layer_norm_rows(x, p.ln_eps);
    Var ones = tape.constant(Matrix(h.rows(), 1, 1.0));
    Var hidden = tape.gelu(tape.add(tape.matmul(h, blk.ffn.w1),
                                    tape.matmul(ones, blk.ffn.b1)));
    Var ff = tape.add(tape.matmul(hidden, blk.ffn.w2),
                      tape.matmul(ones, blk.ffn.b2));
    x = tape.add(x, ff);
  }
  return x;
}

/// Value-level forward: one K x D output per batch sample.
inline std::vector<Matrix> crossformer(const Matrix& query,
                                       const std::vector<Matrix>& context,
                                       const CrossFormerParams& params) {
  std::vector<Matrix> out;
  out.reserve(context.size());
  for (const Matrix& tokens : context) {
    Tape tape;
    CrossFormerVars vars = lift(tape, params, false);
    Var q = tape.constant(query);
    Var c = tape.constant(tokens);
    out.push_back(crossformer_graph(tape, q, c, vars).value());
  }
  return out;
}

}  // namespace fuzzyalign
