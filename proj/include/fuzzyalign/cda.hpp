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
#include <optional>
#include <utility>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/ops.hpp"
#include "fuzzyalign/sdm.hpp"
#include "fuzzyalign/tape.hpp"

namespace fuzzyalign {

/// Row i of every present modality refers to the same identity instance.
struct TriModalBatch {
  Matrix text;    // B x D
  Matrix aerial;  // B x D
  std::optional<Matrix> ground;
  std::vector<std::uint32_t> identities;
};

/// Per-sample difficulty gate. delta_i = cos(T_i, A_i) - cos(T_i, G_i);
/// alpha_i = sigmoid(k * delta_i). Alphas are treated as constants by the
/// loss graph: the gate estimates difficulty, it is not a learned signal.
inline std::pair<std::vector<double>, std::vector<double>> gate_from_features(
    const Matrix& text, const Matrix& aerial, const Matrix& ground, double k) {
  if (!text.same_shape(aerial) || !text.same_shape(ground)) {
    throw ShapeError("gate: modality shapes disagree");
  }
  const std::size_t b = text.rows();
  std::vector<double> delta(b);
  std::vector<double> alpha(b);
  for (std::size_t i = 0; i < b; ++i) {
    delta[i] = cosine_sim_rows(text, i, aerial, i) -
               cosine_sim_rows(text, i, ground, i);
    alpha[i] = sigmoid(delta[i], k);
  }
  return {std::move(delta), std::move(alpha)};
}

inline std::pair<std::vector<double>, std::vector<double>> gate_coefficients(
    const TriModalBatch& batch, double k) {
  if (!batch.ground.has_value()) {
    throw MissingGroundError("gate requires ground features");
  }
  return gate_from_features(batch.text, batch.aerial, *batch.ground, k);
}

struct CdaGraph {
  Var loss_total;
  Var loss_direct;
  Var loss_bridge;  // meaningful only when has_bridge
  bool has_bridge = false;
  std::vector<double> delta;
  std::vector<double> alpha;
};

/// Gated alignment loss over feature nodes already on the tape.
///
/// With ground present:
///   loss_total = (1/B) sum_i [alpha_i * l_direct(i) + (1-alpha_i) * l_bridge(i)]
/// where l_direct attributes SDM(text, aerial) per sample and l_bridge
/// attributes SDM(text, ground) + SDM(stop_grad(ground), aerial). Without
/// ground the loss degenerates to plain SDM(text, aerial).
inline CdaGraph cda_graph(Tape& tape, Var text, Var aerial,
                          std::optional<Var> ground,
                          const std::vector<std::uint32_t>& identities,
                          double k, double tau, double eps) {
  CdaGraph out;
  if (!ground.has_value()) {
    SdmGraph direct = sdm_graph(tape, text, aerial, identities, tau, eps);
    out.loss_total = direct.total;
    out.loss_direct = direct.total;
    return out;
  }

  auto [delta, alpha] =
      gate_from_features(text.value(), aerial.value(), ground->value(), k);
  out.delta = delta;
  out.alpha = alpha;
  out.has_bridge = true;

  SdmGraph direct = sdm_graph(tape, text, aerial, identities, tau, eps);
  SdmGraph text_to_ground =
      sdm_graph(tape, text, *ground, identities, tau, eps);
  SdmGraph ground_to_aerial = sdm_graph(tape, tape.stop_grad(*ground), aerial,
                                        identities, tau, eps);

  const std::size_t b = identities.size();
  Matrix alpha_row(1, b);
  Matrix rest_row(1, b);
  for (std::size_t i = 0; i < b; ++i) {
    alpha_row(0, i) = alpha[i];
    rest_row(0, i) = 1.0 - alpha[i];
  }
  Var bridge_per_sample =
      tape.add(text_to_ground.per_sample, ground_to_aerial.per_sample);
  Var mixed =
      tape.add(tape.matmul(tape.constant(alpha_row), direct.per_sample),
               tape.matmul(tape.constant(rest_row), bridge_per_sample));
  const double inv_b = 1.0 / static_cast<double>(b);
  out.loss_total = tape.scale(mixed, inv_b);
  out.loss_direct = tape.scale(direct.total, inv_b);
  out.loss_bridge = tape.scale(
      tape.add(text_to_ground.total, ground_to_aerial.total), inv_b);
  return out;
}

struct GateResult {
  std::vector<double> delta;
  std::vector<double> alpha;
  double loss_direct = 0.0;
  double loss_bridge = 0.0;
  double loss_total = 0.0;
  Matrix grad_text;
  Matrix grad_aerial;
  Matrix grad_ground;  // 0x0 when ground absent
};

inline GateResult cda_loss(const TriModalBatch& batch, double k, double tau,
                           double eps) {
  if (batch.text.rows() != batch.identities.size() ||
      !batch.text.same_shape(batch.aerial)) {
    throw ShapeError("cda_loss: batch fields disagree on shape");
  }
  Tape tape;
  Var text = tape.input(batch.text);
  Var aerial = tape.input(batch.aerial);
  std::optional<Var> ground;
  if (batch.ground.has_value()) ground = tape.input(*batch.ground);

  CdaGraph graph = cda_graph(tape, text, aerial, ground, batch.identities, k,
                             tau, eps);

  GateResult result;
  result.delta = graph.delta;
  result.alpha = graph.alpha;
  result.loss_total = graph.loss_total.item();
  result.loss_direct = graph.loss_direct.item();
  result.loss_bridge = graph.has_bridge ? graph.loss_bridge.item() : 0.0;

  std::vector<Var> wrt{text, aerial};
  if (ground.has_value()) wrt.push_back(*ground);
  std::vector<Matrix> grads = tape.gradients(graph.loss_total, wrt);
  result.grad_text = std::move(grads[0]);
  result.grad_aerial = std::move(grads[1]);
  result.grad_ground =
      ground.has_value() ? std::move(grads[2]) : Matrix::zeros(0, 0);
  return result;
}

}  // namespace fuzzyalign
