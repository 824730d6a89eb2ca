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
#include <numeric>
#include <random>
#include <vector>

#include "fuzzyalign/config.hpp"
#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"

namespace fuzzyalign {

namespace detail {

inline void normalize_row(Matrix& m, std::size_t r) {
  double norm = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) norm += m(r, j) * m(r, j);
  norm = std::sqrt(norm);
  if (norm < kZeroNormThreshold) {
    throw ZeroNormError("generated row has zero norm");
  }
  for (std::size_t j = 0; j < m.cols(); ++j) m(r, j) /= norm;
}

inline Matrix unit_rows(std::size_t rows, std::size_t cols,
                        std::mt19937_64& rng) {
  Matrix m = Matrix::randn(rows, cols, 1.0, rng);
  for (std::size_t r = 0; r < rows; ++r) normalize_row(m, r);
  return m;
}

}  // namespace detail

/// Everything the generator produces for one (config, seed) pair. Per-sample
/// arrays are flat; sample s of a modality belongs to identity ids[s].
///
/// Aerial samples model the paper's failure mode: the identity signal is
/// shrunk by a per-sample altitude factor and buried in stronger noise, and
/// each attribute token is replaced by pure noise with probability
/// token_dropout_prob (visibility marks the survivors).
struct SyntheticWorld {
  ScenarioConfig config;

  Matrix prototypes;                   // num_identities x dim, unit rows
  Matrix attribute_pool;               // attribute_pool_size x dim, unit rows
  std::vector<Matrix> attribute_bank;  // per identity: tokens_per_sample x dim

  Matrix text_features;
  std::vector<std::uint32_t> text_ids;
  std::vector<Matrix> text_tokens;  // per text sample

  Matrix aerial_features;
  std::vector<std::uint32_t> aerial_ids;
  std::vector<Matrix> aerial_tokens;
  std::vector<std::vector<std::uint8_t>> aerial_visibility;  // 1 = kept
  std::vector<double> aerial_altitude;

  bool has_ground = false;
  Matrix ground_features;
  std::vector<std::uint32_t> ground_ids;

  std::vector<std::uint32_t> train_identities;
  std::vector<std::uint32_t> eval_identities;

  std::vector<std::size_t> samples_of(const std::vector<std::uint32_t>& ids,
                                      std::uint32_t identity) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < ids.size(); ++s) {
      if (ids[s] == identity) out.push_back(s);
    }
    return out;
  }
};

inline SyntheticWorld generate(const ScenarioConfig& config) {
  SyntheticWorld world;
  world.config = config;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t ids = config.num_identities;
  const std::size_t dim = config.dim;
  const std::size_t toks = config.tokens_per_sample;

  world.prototypes = detail::unit_rows(ids, dim, rng);
  world.attribute_pool =
      detail::unit_rows(config.attribute_pool_size, dim, rng);

  std::uniform_int_distribution<std::size_t> pick_attr(
      0, config.attribute_pool_size - 1);
  world.attribute_bank.reserve(ids);
  for (std::size_t i = 0; i < ids; ++i) {
    Matrix bank(toks, dim);
    for (std::size_t t = 0; t < toks; ++t) {
      const std::size_t a = pick_attr(rng);
      for (std::size_t j = 0; j < dim; ++j) {
        bank(t, j) = world.prototypes(i, j) + world.attribute_pool(a, j);
      }
      detail::normalize_row(bank, t);
    }
    world.attribute_bank.push_back(std::move(bank));
  }

  const std::size_t n_text = ids * config.captions_per_identity;
  world.text_features = Matrix(n_text, dim);
  world.text_ids.reserve(n_text);
  world.text_tokens.reserve(n_text);
  for (std::size_t i = 0; i < ids; ++i) {
    for (std::size_t c = 0; c < config.captions_per_identity; ++c) {
      const std::size_t s = world.text_ids.size();
      world.text_ids.push_back(static_cast<std::uint32_t>(i));
      for (std::size_t j = 0; j < dim; ++j) {
        world.text_features(s, j) =
            world.prototypes(i, j) + config.text_noise_scale * gauss(rng);
      }
      detail::normalize_row(world.text_features, s);
      Matrix tokens = world.attribute_bank[i];
      for (std::size_t t = 0; t < toks; ++t) {
        for (std::size_t j = 0; j < dim; ++j) {
          tokens(t, j) += config.text_noise_scale * gauss(rng);
        }
        detail::normalize_row(tokens, t);
      }
      world.text_tokens.push_back(std::move(tokens));
    }
  }

  const std::size_t n_aerial = ids * config.aerial_images_per_identity;
  world.aerial_features = Matrix(n_aerial, dim);
  world.aerial_ids.reserve(n_aerial);
  std::uniform_real_distribution<double> altitude(1.0 - config.altitude_spread,
                                                  1.0);
  for (std::size_t i = 0; i < ids; ++i) {
    for (std::size_t v = 0; v < config.aerial_images_per_identity; ++v) {
      const std::size_t s = world.aerial_ids.size();
      world.aerial_ids.push_back(static_cast<std::uint32_t>(i));
      const double a = altitude(rng);
      world.aerial_altitude.push_back(a);
      for (std::size_t j = 0; j < dim; ++j) {
        world.aerial_features(s, j) = a * world.prototypes(i, j) +
                                      config.aerial_noise_scale * gauss(rng);
      }
      Matrix tokens(toks, dim);
      std::vector<std::uint8_t> visible(toks, 1);
      for (std::size_t t = 0; t < toks; ++t) {
        if (unit(rng) < config.token_dropout_prob) {
          visible[t] = 0;
          for (std::size_t j = 0; j < dim; ++j) tokens(t, j) = gauss(rng);
          detail::normalize_row(tokens, t);
        } else {
          for (std::size_t j = 0; j < dim; ++j) {
            tokens(t, j) = world.attribute_bank[i](t, j);
          }
        }
      }
      world.aerial_tokens.push_back(std::move(tokens));
      world.aerial_visibility.push_back(std::move(visible));
    }
  }

  world.has_ground = config.ground_images_per_identity > 0;
  if (world.has_ground) {
    const std::size_t n_ground = ids * config.ground_images_per_identity;
    world.ground_features = Matrix(n_ground, dim);
    world.ground_ids.reserve(n_ground);
    for (std::size_t i = 0; i < ids; ++i) {
      for (std::size_t v = 0; v < config.ground_images_per_identity; ++v) {
        const std::size_t s = world.ground_ids.size();
        world.ground_ids.push_back(static_cast<std::uint32_t>(i));
        for (std::size_t j = 0; j < dim; ++j) {
          world.ground_features(s, j) =
              world.prototypes(i, j) + config.ground_noise_scale * gauss(rng);
        }
        detail::normalize_row(world.ground_features, s);
      }
    }
  }

  std::vector<std::uint32_t> order(ids);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t eval_count = static_cast<std::size_t>(
      std::llround(config.holdout_fraction * static_cast<double>(ids)));
  const std::size_t max_eval = ids >= 3 ? ids - 2 : 1;
  eval_count = std::clamp<std::size_t>(eval_count, 1, max_eval);
  world.eval_identities.assign(order.begin(), order.begin() + eval_count);
  world.train_identities.assign(order.begin() + eval_count, order.end());
  std::sort(world.eval_identities.begin(), world.eval_identities.end());
  std::sort(world.train_identities.begin(), world.train_identities.end());
  return world;
}

}  // namespace fuzzyalign
