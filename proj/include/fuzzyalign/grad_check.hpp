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
#include <cstring>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/tape.hpp"

namespace fuzzyalign {

/// Compares the tape's reverse-mode gradients against central differences
/// (f(x+h) - f(x-h)) / 2h taken by replaying the tape with perturbed leaves.
/// Returns the worst per-entry error max(|g - fd| / (|fd| + 1), |g - fd|)
/// across all checked parameters.
///
/// Throws NonDeterministic if two replays of the unperturbed tape disagree.
inline double grad_check(Tape& tape, Var loss, const std::vector<Var>& params,
                         double step = 1e-4) {
  const double base = loss.item();
  tape.replay();
  const double once = loss.item();
  tape.replay();
  const double twice = loss.item();
  if (std::memcmp(&once, &twice, sizeof(double)) != 0 || once != base) {
    throw NonDeterministicError("grad_check: forward passes disagree");
  }

  const std::vector<Matrix> grads = tape.gradients(loss, params);

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Var param = params[p];
    const Matrix saved = param.value();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      tape.poke_leaf(param, i, saved[i] + step);
      tape.replay();
      const double hi = loss.item();
      tape.poke_leaf(param, i, saved[i] - step);
      tape.replay();
      const double lo = loss.item();
      tape.poke_leaf(param, i, saved[i]);

      const double fd = (hi - lo) / (2.0 * step);
      const double g = grads[p][i];
      const double abs_err = std::abs(g - fd);
      const double err = std::max(abs_err / (std::abs(fd) + 1.0), abs_err);
      worst = std::max(worst, err);
    }
  }
  tape.replay();
  return worst;
}

}  // namespace fuzzyalign
