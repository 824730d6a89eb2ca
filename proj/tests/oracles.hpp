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

// Independent reimplementations the tests compare the library against.
// Everything is written as plain scalar loops over vector<vector<double>>
// on purpose: sharing code with the library would hide shared bugs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "fuzzyalign/crossformer.hpp"
#include "fuzzyalign/fuzzy.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/metrics.hpp"

namespace oracle {

using Row = std::vector<double>;
using Mat = std::vector<Row>;

// High-precision constants, rounded to nearest double from 30-digit
// evaluations of the closed forms.
inline constexpr double kSigmoid1 = 0.73105857863000487925;
inline constexpr double kSigmoid10 = 0.99995460213129756561;
inline constexpr double kSigmoidNeg10 = 4.5397868702434394505e-05;
inline constexpr double kSigmoidNeg8 = 3.3535013046647810388e-04;
inline constexpr double kSoftmaxPair1 = 0.73105857863000487925;
inline constexpr double kSoftmaxPair0 = 0.26894142136999512075;
inline constexpr double kTwoLogTwo = 1.3862943611198906188;
inline constexpr double kExpNegHalf = 0.6065306597126334236;
inline constexpr double kExpNegTwo = 0.13533528323661269189;
inline constexpr double kLogTwo = 0.69314718055994530942;

inline Mat from_matrix(const fuzzyalign::Matrix& m) {
  Mat out(m.rows(), Row(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

inline fuzzyalign::Matrix to_matrix(const Mat& m) {
  fuzzyalign::Matrix out(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t r = 0; r < m.size(); ++r) {
    for (std::size_t c = 0; c < m[r].size(); ++c) out(r, c) = m[r][c];
  }
  return out;
}

inline double dot(const Row& a, const Row& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Row& a, const Row& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Row(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      for (std::size_t k = 0; k < b.size(); ++k) {
        out[i][j] += a[i][k] * b[k][j];
      }
    }
  }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a[0].size(), Row(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) out[j][i] = a[i][j];
  }
  return out;
}

inline Row softmax(const Row& logits, double tau) {
  Row out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / tau);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

// ---------------------------------------------------------------------------
// Similarity distribution matching.

struct SdmEval {
  Mat p;
  Mat q;
  double total = 0.0;
  Row per_sample;
};

inline Mat label_targets(const std::vector<std::uint32_t>& ids_row,
                         const std::vector<std::uint32_t>& ids_col) {
  Mat q(ids_row.size(), Row(ids_col.size(), 0.0));
  for (std::size_t i = 0; i < ids_row.size(); ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < ids_col.size(); ++j) {
      q[i][j] = ids_row[i] == ids_col[j] ? 1.0 : 0.0;
      row_sum += q[i][j];
    }
    for (double& v : q[i]) v /= row_sum;
  }
  return q;
}

inline SdmEval sdm_from_sim(const Mat& sim,
                            const std::vector<std::uint32_t>& ids_row,
                            const std::vector<std::uint32_t>& ids_col,
                            double tau, double eps) {
  SdmEval ev;
  ev.q = label_targets(ids_row, ids_col);
  ev.p.resize(sim.size());
  for (std::size_t i = 0; i < sim.size(); ++i) ev.p[i] = softmax(sim[i], tau);

  Mat m(sim.size(), Row(sim[0].size(), 0.0));
  for (std::size_t i = 0; i < sim.size(); ++i) {
    for (std::size_t j = 0; j < sim[i].size(); ++j) {
      m[i][j] = ev.p[i][j] * (std::log(ev.p[i][j]) - std::log(ev.q[i][j] + eps));
      ev.total += m[i][j];
    }
  }
  ev.per_sample.assign(sim.size(), 0.0);
  for (std::size_t i = 0; i < sim.size(); ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < sim[i].size(); ++j) row += m[i][j];
    for (std::size_t j = 0; j < sim.size(); ++j) col += m[j][i];
    ev.per_sample[i] = 0.5 * (row + col);
  }
  return ev;
}

inline Mat cosine_matrix(const Mat& a, const Mat& b) {
  Mat out(a.size(), Row(b.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i][j] = cosine(a[i], b[j]);
  }
  return out;
}

inline SdmEval sdm(const Mat& a, const Mat& b,
                   const std::vector<std::uint32_t>& ids, double tau,
                   double eps) {
  return sdm_from_sim(cosine_matrix(a, b), ids, ids, tau, eps);
}

// ---------------------------------------------------------------------------
// Consistency-driven gate.

struct CdaEval {
  Row delta;
  Row alpha;
  double loss_direct = 0.0;
  double loss_total = 0.0;
};

inline CdaEval cda(const Mat& text, const Mat& aerial,
                   const std::optional<Mat>& ground,
                   const std::vector<std::uint32_t>& ids, double k, double tau,
                   double eps) {
  CdaEval ev;
  const SdmEval direct = sdm(text, aerial, ids, tau, eps);
  if (!ground) {
    ev.loss_direct = direct.total;
    ev.loss_total = direct.total;
    return ev;
  }
  const std::size_t b = text.size();
  for (std::size_t i = 0; i < b; ++i) {
    const double d = cosine(text[i], aerial[i]) - cosine(text[i], (*ground)[i]);
    ev.delta.push_back(d);
    ev.alpha.push_back(1.0 / (1.0 + std::exp(-k * d)));
  }
  const SdmEval tg = sdm(text, *ground, ids, tau, eps);
  const SdmEval ga = sdm(*ground, aerial, ids, tau, eps);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double bridge = tg.per_sample[i] + ga.per_sample[i];
    total += ev.alpha[i] * direct.per_sample[i] +
             (1.0 - ev.alpha[i]) * bridge;
  }
  ev.loss_direct = direct.total / static_cast<double>(b);
  ev.loss_total = total / static_cast<double>(b);
  return ev;
}

// ---------------------------------------------------------------------------
// Token mixer (cross readout plus pre-norm self blocks).

inline Mat layer_norm(const Mat& x, double eps) {
  Mat out(x.size(), Row(x[0].size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0.0;
    for (double v : x[i]) mean += v;
    mean /= static_cast<double>(x[i].size());
    double var = 0.0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x[i].size());
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      out[i][j] = (x[i][j] - mean) * inv;
    }
  }
  return out;
}

inline Mat attention(const Mat& queries, const Mat& context,
                     const fuzzyalign::AttentionBlockParams& p) {
  const Mat q = matmul(queries, from_matrix(p.wq));
  const Mat key = matmul(context, from_matrix(p.wk));
  const Mat v = matmul(context, from_matrix(p.wv));
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.wq.cols()));
  Mat scores(q.size(), Row(key.size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < key.size(); ++j) {
      scores[i][j] = dot(q[i], key[j]) * scale;
    }
    scores[i] = softmax(scores[i], 1.0);
  }
  return matmul(matmul(scores, v), from_matrix(p.wo));
}

inline Mat feed_forward(const Mat& x, const fuzzyalign::FeedForwardParams& p) {
  Mat h = matmul(x, from_matrix(p.w1));
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < h[i].size(); ++j) {
      h[i][j] = gelu(h[i][j] + p.b1(0, j));
    }
  }
  Mat out = matmul(h, from_matrix(p.w2));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] += p.b2(0, j);
  }
  return out;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] += b[i][j];
  }
  return out;
}

inline Mat crossformer(const Mat& query, const Mat& context,
                       const fuzzyalign::CrossFormerParams& p) {
  Mat x = attention(query, context, p.cross);
  for (const fuzzyalign::SelfBlockParams& block : p.blocks) {
    const Mat normed = layer_norm(x, p.ln_eps);
    x = add(x, attention(normed, normed, block.attn));
    x = add(x, feed_forward(layer_norm(x, p.ln_eps), block.ffn));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Fuzzy memberships.

inline double sigma_mlp(const Row& class_token,
                        const fuzzyalign::SigmaMlpParams& p) {
  Row h(p.w1.cols(), 0.0);
  for (std::size_t j = 0; j < h.size(); ++j) {
    double acc = p.b1(0, j);
    for (std::size_t i = 0; i < class_token.size(); ++i) {
      acc += class_token[i] * p.w1(i, j);
    }
    h[j] = gelu(acc);
  }
  double s = p.b2(0, 0);
  for (std::size_t j = 0; j < h.size(); ++j) s += h[j] * p.w2(j, 0);
  return std::exp(s);
}

inline double membership(double r, double sigma) {
  const double clamped = std::clamp(r, -1.0, 1.0);
  const double gap = 1.0 - clamped;
  return std::exp(-(gap * gap) / (2.0 * sigma * sigma));
}

inline Row mean_row(const Mat& tokens) {
  Row out(tokens[0].size(), 0.0);
  for (const Row& t : tokens) {
    for (std::size_t j = 0; j < t.size(); ++j) out[j] += t[j];
  }
  for (double& v : out) v /= static_cast<double>(tokens.size());
  return out;
}

struct FtaEval {
  Mat sim;       // B x B, rows aerial, cols text
  Mat mu_aerial; // B x K
  Mat mu_text;   // B x K
  double loss = 0.0;
};

inline FtaEval fta(const std::vector<Mat>& aerial_tokens,
                   const std::vector<Mat>& text_tokens,
                   const fuzzyalign::FtaParams& params,
                   const std::vector<std::uint32_t>& ids, double tau,
                   double eps) {
  const std::size_t b = aerial_tokens.size();
  const std::size_t k = params.query.rows();
  const Mat query = from_matrix(params.query);

  std::vector<Mat> out_a(b), out_t(b);
  FtaEval ev;
  ev.mu_aerial.assign(b, Row(k, 0.0));
  ev.mu_text.assign(b, Row(k, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    out_a[i] = crossformer(query, aerial_tokens[i], params.former);
    out_t[i] = crossformer(query, text_tokens[i], params.former);
    const Row class_a = mean_row(aerial_tokens[i]);
    const Row class_t = mean_row(text_tokens[i]);
    const double sigma_a = sigma_mlp(class_a, params.sigma_aerial);
    const double sigma_t = sigma_mlp(class_t, params.sigma_text);
    for (std::size_t j = 0; j < k; ++j) {
      ev.mu_aerial[i][j] = membership(cosine(out_a[i][j], class_a), sigma_a);
      ev.mu_text[i][j] = membership(cosine(out_t[i][j], class_t), sigma_t);
    }
  }
  ev.sim.assign(b, Row(b, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += ev.mu_aerial[i][t] * ev.mu_text[j][t] *
               cosine(out_a[i][t], out_t[j][t]);
      }
      ev.sim[i][j] = acc / static_cast<double>(k);
    }
  }
  ev.loss = sdm_from_sim(ev.sim, ids, ids, tau, eps).total;
  return ev;
}

// ---------------------------------------------------------------------------
// Retrieval metrics, mirroring the library's accumulation order so the
// comparison can demand exact equality.

inline fuzzyalign::MetricReport evaluate(const fuzzyalign::RetrievalTask& task,
                                         const std::vector<std::size_t>& ks) {
  const std::size_t nq = task.query_ids.size();
  const std::size_t ng = task.gallery_ids.size();
  std::vector<std::vector<std::size_t>> hit_flags(
      ks.size(), std::vector<std::size_t>(nq, 0));
  std::vector<double> ap(nq, 0.0);

  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<double> sims(ng);
    for (std::size_t i = 0; i < ng; ++i) {
      double d = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < task.query_features.cols(); ++c) {
        d += task.query_features(q, c) * task.gallery_features(i, c);
        na += task.query_features(q, c) * task.query_features(q, c);
        nb += task.gallery_features(i, c) * task.gallery_features(i, c);
      }
      sims[i] = d / (std::sqrt(na) * std::sqrt(nb));
    }
    std::vector<std::size_t> order(ng);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      return a < b;
    });
    std::size_t first_hit = ng;
    std::size_t seen = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < ng; ++rank) {
      if (task.gallery_ids[order[rank]] != task.query_ids[q]) continue;
      if (first_hit == ng) first_hit = rank;
      ++seen;
      precision_sum +=
          static_cast<double>(seen) / static_cast<double>(rank + 1);
    }
    ap[q] = precision_sum / static_cast<double>(seen);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      hit_flags[i][q] = first_hit < ks[i] ? 1 : 0;
    }
  }

  fuzzyalign::MetricReport report;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < nq; ++q) hits += hit_flags[i][q];
    const double pct =
        100.0 * static_cast<double>(hits) / static_cast<double>(nq);
    report.rank_at.emplace_back(ks[i], pct);
    if (ks[i] == 1) report.rank1 = pct;
    if (ks[i] == 5) report.rank5 = pct;
    if (ks[i] == 10) report.rank10 = pct;
  }
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) ap_sum += ap[q];
  report.map = 100.0 * ap_sum / static_cast<double>(nq);
  report.rsum = report.rank1 + report.rank5 + report.rank10;
  return report;
}

}  // namespace oracle
