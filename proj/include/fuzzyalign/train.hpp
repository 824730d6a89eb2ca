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
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fuzzyalign/cda.hpp"
#include "fuzzyalign/config.hpp"
#include "fuzzyalign/error.hpp"
#include "fuzzyalign/fuzzy.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/metrics.hpp"
#include "fuzzyalign/ops.hpp"
#include "fuzzyalign/sdm.hpp"
#include "fuzzyalign/synthetic.hpp"
#include "fuzzyalign/tape.hpp"

namespace fuzzyalign {

enum class Variant { kBaselineSdm, kCda, kCdaFta, kFtaUnweighted };

inline Variant parse_variant(const std::string& name) {
  if (name == "baseline_sdm") return Variant::kBaselineSdm;
  if (name == "cda") return Variant::kCda;
  if (name == "cda_fta") return Variant::kCdaFta;
  if (name == "fta_unweighted") return Variant::kFtaUnweighted;
  throw ConfigInvalidError(
      "unknown variant \"" + name +
      "\"; expected baseline_sdm, cda, cda_fta, or fta_unweighted");
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kBaselineSdm: return "baseline_sdm";
    case Variant::kCda: return "cda";
    case Variant::kCdaFta: return "cda_fta";
    case Variant::kFtaUnweighted: return "fta_unweighted";
  }
  return "?";
}

inline bool variant_uses_gate(Variant v) {
  return v == Variant::kCda || v == Variant::kCdaFta;
}

inline bool variant_uses_fta(Variant v) {
  return v == Variant::kCdaFta || v == Variant::kFtaUnweighted;
}

/// Trainable state: one linear projection per modality (identity at start)
/// plus the token alignment module when the variant uses it.
struct TrainState {
  Matrix w_text;
  Matrix w_aerial;
  Matrix w_ground;
  FtaParams fta;
  bool has_ground = false;
  bool has_fta = false;

  static TrainState init(std::size_t dim, const AlignmentConfig& align,
                         Variant variant, bool world_has_ground,
                         std::mt19937_64& rng) {
    TrainState s;
    s.w_text = Matrix::identity(dim);
    s.w_aerial = Matrix::identity(dim);
    s.has_ground = variant_uses_gate(variant) && world_has_ground;
    s.has_fta = variant_uses_fta(variant);
    if (s.has_ground) s.w_ground = Matrix::identity(dim);
    if (s.has_fta) {
      s.fta = FtaParams::init(dim, align.query_tokens, align.self_blocks, rng);
    }
    return s;
  }
};

/// Stable name/tensor walk over the participating parameters. Checkpoints
/// and the per-step update both follow this order.
template <typename State, typename F>
void visit_trainables(State& state, F&& f) {
  f(std::string("proj.text"), state.w_text);
  f(std::string("proj.aerial"), state.w_aerial);
  if (state.has_ground) f(std::string("proj.ground"), state.w_ground);
  if (state.has_fta) {
    visit_fta(state.fta, [&](const std::string& name, auto& m) {
      f("fta." + name, m);
    });
  }
}

struct ExperimentResult {
  MetricReport report;
  std::vector<double> loss_trace;
  std::vector<double> alpha_mean_trace;  // empty when the gate is inactive
  TrainState state;
  bool degenerated = false;  // gate variant ran on a world without ground
};

namespace detail {

inline Matrix gather_rows(const Matrix& source,
                          const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < source.cols(); ++j) {
      out(r, j) = source(rows[r], j);
    }
  }
  return out;
}

inline std::size_t pick_instance(const std::vector<std::size_t>& instances,
                                 std::mt19937_64& rng) {
  if (instances.empty()) {
    throw ConfigInvalidError("identity has no sample of a required modality");
  }
  std::uniform_int_distribution<std::size_t> pick(0, instances.size() - 1);
  return instances[pick(rng)];
}

}  // namespace detail

/// Trains the selected loss composition with plain SGD and evaluates
/// text-to-aerial retrieval on the held-out identities.
inline ExperimentResult run_experiment(const SyntheticWorld& world,
                                       Variant variant,
                                       const AlignmentConfig& align,
                                       const TrainConfig& train) {
  const std::size_t dim = world.config.dim;
  const std::size_t batch = train.batch_size;
  if (batch > world.train_identities.size()) {
    throw ConfigInvalidError("train.batch_size exceeds training identities (" +
                             std::to_string(world.train_identities.size()) +
                             ")");
  }

  std::mt19937_64 rng(train.seed);
  ExperimentResult result;
  result.state =
      TrainState::init(dim, align, variant, world.has_ground, rng);
  TrainState& state = result.state;
  result.degenerated = variant_uses_gate(variant) && !world.has_ground;

  std::vector<std::uint32_t> id_pool = world.train_identities;

  for (std::size_t step = 0; step < train.steps; ++step) {
    std::shuffle(id_pool.begin(), id_pool.end(), rng);
    std::vector<std::uint32_t> ids(id_pool.begin(), id_pool.begin() + batch);

    std::vector<std::size_t> text_idx(batch), aerial_idx(batch),
        ground_idx(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      text_idx[i] =
          detail::pick_instance(world.samples_of(world.text_ids, ids[i]), rng);
      aerial_idx[i] = detail::pick_instance(
          world.samples_of(world.aerial_ids, ids[i]), rng);
      if (state.has_ground) {
        ground_idx[i] = detail::pick_instance(
            world.samples_of(world.ground_ids, ids[i]), rng);
      }
    }

    try {
      Tape tape;
      Var wt = tape.input(state.w_text);
      Var wa = tape.input(state.w_aerial);
      Var wg;
      FtaVars fta_vars;
      std::vector<Var> params{wt, wa};
      if (state.has_ground) {
        wg = tape.input(state.w_ground);
        params.push_back(wg);
      }
      if (state.has_fta) {
        fta_vars = lift(tape, state.fta, true);
        visit_fta(fta_vars,
                  [&](const std::string&, Var v) { params.push_back(v); });
      }

      Var text = tape.matmul(
          tape.constant(detail::gather_rows(world.text_features, text_idx)),
          wt);
      Var aerial = tape.matmul(
          tape.constant(detail::gather_rows(world.aerial_features, aerial_idx)),
          wa);
      std::optional<Var> ground;
      if (state.has_ground) {
        ground = tape.matmul(
            tape.constant(
                detail::gather_rows(world.ground_features, ground_idx)),
            wg);
      }

      Var loss;
      double alpha_mean = -1.0;
      if (variant_uses_gate(variant)) {
        CdaGraph gate = cda_graph(tape, text, aerial, ground, ids, align.k,
                                  align.tau, align.eps);
        loss = gate.loss_total;
        if (gate.has_bridge) {
          double acc = 0.0;
          for (double a : gate.alpha) acc += a;
          alpha_mean = acc / static_cast<double>(gate.alpha.size());
        }
      } else {
        loss = sdm_graph(tape, text, aerial, ids, align.tau, align.eps).total;
      }

      if (state.has_fta) {
        std::vector<Var> text_tok, aerial_tok;
        text_tok.reserve(batch);
        aerial_tok.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
          text_tok.push_back(
              tape.matmul(tape.constant(world.text_tokens[text_idx[i]]), wt));
          aerial_tok.push_back(tape.matmul(
              tape.constant(world.aerial_tokens[aerial_idx[i]]), wa));
        }
        FtaSimilarityGraph sim =
            fta_similarity_graph(tape, aerial_tok, text_tok, fta_vars);
        Var fta_term = fta_loss_from_similarity(tape, sim.similarity, ids,
                                                align.tau, align.eps);
        loss = tape.add(loss, tape.scale(fta_term, align.fta_weight));
      }

      result.loss_trace.push_back(loss.item());
      if (alpha_mean >= 0.0) result.alpha_mean_trace.push_back(alpha_mean);

      std::vector<Matrix> grads = tape.gradients(loss, params);
      double norm_sq = 0.0;
      for (const Matrix& g : grads) {
        for (double v : g.data()) norm_sq += v * v;
      }
      double scale = train.learning_rate;
      if (train.grad_clip_norm > 0.0) {
        const double norm = std::sqrt(norm_sq);
        if (norm > train.grad_clip_norm) {
          scale *= train.grad_clip_norm / norm;
        }
      }
      std::size_t slot = 0;
      visit_trainables(state, [&](const std::string&, Matrix& m) {
        const Matrix& g = grads[slot++];
        for (std::size_t i = 0; i < m.size(); ++i) m[i] -= scale * g[i];
      });
    } catch (const NonFiniteError& e) {
      const std::size_t last_finite =
          result.loss_trace.empty() ? 0 : result.loss_trace.size() - 1;
      throw DivergedError(std::string("training diverged: ") + e.what(),
                          last_finite);
    }
  }

  // Held-out retrieval: text queries against the aerial gallery.
  std::vector<std::size_t> query_rows, gallery_rows;
  std::vector<std::uint32_t> query_ids, gallery_ids;
  for (std::size_t s = 0; s < world.text_ids.size(); ++s) {
    if (std::binary_search(world.eval_identities.begin(),
                           world.eval_identities.end(), world.text_ids[s])) {
      query_rows.push_back(s);
      query_ids.push_back(world.text_ids[s]);
    }
  }
  for (std::size_t s = 0; s < world.aerial_ids.size(); ++s) {
    if (std::binary_search(world.eval_identities.begin(),
                           world.eval_identities.end(), world.aerial_ids[s])) {
      gallery_rows.push_back(s);
      gallery_ids.push_back(world.aerial_ids[s]);
    }
  }
  RetrievalTask task;
  task.query_features = detail::matmul(
      detail::gather_rows(world.text_features, query_rows), state.w_text);
  task.gallery_features = detail::matmul(
      detail::gather_rows(world.aerial_features, gallery_rows),
      state.w_aerial);
  task.query_ids = std::move(query_ids);
  task.gallery_ids = std::move(gallery_ids);
  result.report = evaluate(task, train.eval_ks);
  return result;
}

struct GateDiagnosticsRow {
  std::size_t aerial_sample = 0;
  std::uint32_t identity = 0;
  double altitude = 1.0;
  double delta = 0.0;
  double alpha = 0.5;
};

/// Gate values over every aerial sample, pairing each with the first text
/// and ground samples of its identity.
inline std::vector<GateDiagnosticsRow> gate_diagnostics(
    const SyntheticWorld& world, const TrainState& state, double k) {
  if (!world.has_ground) {
    throw MissingGroundError("gate diagnostics need a ground modality");
  }
  std::vector<GateDiagnosticsRow> rows;
  rows.reserve(world.aerial_ids.size());
  const Matrix text_proj =
      detail::matmul(world.text_features, state.w_text);
  const Matrix aerial_proj =
      detail::matmul(world.aerial_features, state.w_aerial);
  const Matrix ground_proj =
      state.has_ground ? detail::matmul(world.ground_features, state.w_ground)
                       : world.ground_features;
  for (std::size_t s = 0; s < world.aerial_ids.size(); ++s) {
    const std::uint32_t id = world.aerial_ids[s];
    const std::size_t t = world.samples_of(world.text_ids, id).front();
    const std::size_t g = world.samples_of(world.ground_ids, id).front();
    GateDiagnosticsRow row;
    row.aerial_sample = s;
    row.identity = id;
    row.altitude = world.aerial_altitude[s];
    row.delta = cosine_sim_rows(text_proj, t, aerial_proj, s) -
                cosine_sim_rows(text_proj, t, ground_proj, g);
    row.alpha = sigmoid(row.delta, k);
    rows.push_back(row);
  }
  return rows;
}

struct MembershipDiagnosticsRow {
  std::size_t aerial_sample = 0;
  std::uint32_t identity = 0;
  std::size_t token = 0;
  std::uint8_t visible = 1;
  double mu_a = 0.0;
  double mu_t = 0.0;
  double mu_joint = 0.0;
};

/// Per-token memberships over every aerial sample, pairing each with the
/// first text sample of its identity.
inline std::vector<MembershipDiagnosticsRow> membership_diagnostics(
    const SyntheticWorld& world, const TrainState& state) {
  std::vector<MembershipDiagnosticsRow> rows;
  for (std::size_t s = 0; s < world.aerial_ids.size(); ++s) {
    const std::uint32_t id = world.aerial_ids[s];
    const std::size_t t = world.samples_of(world.text_ids, id).front();

    Tape tape;
    FtaVars vars = lift(tape, state.fta, false);
    Var wa = tape.constant(state.w_aerial);
    Var wt = tape.constant(state.w_text);
    Var aerial_tokens =
        tape.matmul(tape.constant(world.aerial_tokens[s]), wa);
    Var text_tokens = tape.matmul(tape.constant(world.text_tokens[t]), wt);
    TokenSide aerial =
        token_side(tape, aerial_tokens, vars.query, vars.former,
                   vars.sigma_aerial);
    TokenSide text = token_side(tape, text_tokens, vars.query, vars.former,
                                vars.sigma_text);
    const Matrix& mu_a = aerial.membership.value();
    const Matrix& mu_t = text.membership.value();
    for (std::size_t tok = 0; tok < mu_a.rows(); ++tok) {
      MembershipDiagnosticsRow row;
      row.aerial_sample = s;
      row.identity = id;
      row.token = tok;
      row.visible = world.aerial_visibility[s][tok];
      row.mu_a = mu_a(tok, 0);
      row.mu_t = mu_t(tok, 0);
      row.mu_joint = row.mu_a * row.mu_t;
      rows.push_back(row);
    }
  }
  return rows;
}

/// Population variance of sigmoid(k * delta) for each steepness value.
inline std::vector<std::pair<double, double>> alpha_variance_sweep(
    const std::vector<double>& delta, const std::vector<double>& ks) {
  std::vector<std::pair<double, double>> out;
  out.reserve(ks.size());
  for (double k : ks) {
    double mean = 0.0;
    for (double d : delta) mean += sigmoid(d, k);
    mean /= static_cast<double>(delta.size());
    double var = 0.0;
    for (double d : delta) {
      const double a = sigmoid(d, k) - mean;
      var += a * a;
    }
    var /= static_cast<double>(delta.size());
    out.emplace_back(k, var);
  }
  return out;
}

}  // namespace fuzzyalign
