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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fuzzyalign/error.hpp"

#include "json.hpp"

namespace fuzzyalign {

/// Synthetic world shape and noise knobs.
struct ScenarioConfig {
  std::size_t num_identities = 32;
  std::size_t captions_per_identity = 2;
  std::size_t aerial_images_per_identity = 2;
  std::size_t ground_images_per_identity = 2;  // 0 drops the modality
  std::size_t dim = 32;
  std::size_t tokens_per_sample = 6;
  std::size_t attribute_pool_size = 16;
  double text_noise_scale = 0.05;
  double aerial_noise_scale = 0.40;
  double ground_noise_scale = 0.10;
  double token_dropout_prob = 0.5;
  double altitude_spread = 0.5;
  double holdout_fraction = 0.25;
  std::uint64_t seed = 7;
};

/// Loss and module hyperparameters.
struct AlignmentConfig {
  double k = 1.0;
  double tau = 0.02;
  double eps = 1e-8;
  std::size_t query_tokens = 4;
  std::size_t self_blocks = 2;
  double fta_weight = 1.0;
};

struct TrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 11;
  std::vector<std::size_t> eval_ks = {1, 5, 10};
};

struct RunConfig {
  ScenarioConfig scenario;
  AlignmentConfig align;
  TrainConfig train;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::vector<std::string>& known,
                                const std::string& section) {
  for (const auto& [key, _] : obj.items()) {
    bool found = false;
    for (const std::string& k : known) {
      if (k == key) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigInvalidError("unknown key \"" + section + "." + key + "\"");
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& obj, const std::string& section,
                const char* key, T& into) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigInvalidError("field \"" + section + "." + key +
                             "\" has the wrong type");
  }
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigInvalidError(message);
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& obj) {
  detail::reject_unknown_keys(
      obj,
      {"num_identities", "captions_per_identity", "aerial_images_per_identity",
       "ground_images_per_identity", "dim", "tokens_per_sample",
       "attribute_pool_size", "text_noise_scale", "aerial_noise_scale",
       "ground_noise_scale", "token_dropout_prob", "altitude_spread",
       "holdout_fraction", "seed"},
      "scenario");
  ScenarioConfig c;
  detail::read_field(obj, "scenario", "num_identities", c.num_identities);
  detail::read_field(obj, "scenario", "captions_per_identity",
                     c.captions_per_identity);
  detail::read_field(obj, "scenario", "aerial_images_per_identity",
                     c.aerial_images_per_identity);
  detail::read_field(obj, "scenario", "ground_images_per_identity",
                     c.ground_images_per_identity);
  detail::read_field(obj, "scenario", "dim", c.dim);
  detail::read_field(obj, "scenario", "tokens_per_sample",
                     c.tokens_per_sample);
  detail::read_field(obj, "scenario", "attribute_pool_size",
                     c.attribute_pool_size);
  detail::read_field(obj, "scenario", "text_noise_scale", c.text_noise_scale);
  detail::read_field(obj, "scenario", "aerial_noise_scale",
                     c.aerial_noise_scale);
  detail::read_field(obj, "scenario", "ground_noise_scale",
                     c.ground_noise_scale);
  detail::read_field(obj, "scenario", "token_dropout_prob",
                     c.token_dropout_prob);
  detail::read_field(obj, "scenario", "altitude_spread", c.altitude_spread);
  detail::read_field(obj, "scenario", "holdout_fraction", c.holdout_fraction);
  detail::read_field(obj, "scenario", "seed", c.seed);

  detail::require(c.num_identities >= 2, "scenario.num_identities must be >= 2");
  detail::require(c.captions_per_identity >= 1,
                  "scenario.captions_per_identity must be >= 1");
  detail::require(c.aerial_images_per_identity >= 1,
                  "scenario.aerial_images_per_identity must be >= 1");
  detail::require(c.dim >= 2, "scenario.dim must be >= 2");
  detail::require(c.tokens_per_sample >= 1,
                  "scenario.tokens_per_sample must be >= 1");
  detail::require(c.attribute_pool_size >= 1,
                  "scenario.attribute_pool_size must be >= 1");
  detail::require(c.text_noise_scale >= 0.0,
                  "scenario.text_noise_scale must be >= 0");
  detail::require(c.ground_noise_scale >= 0.0,
                  "scenario.ground_noise_scale must be >= 0");
  detail::require(c.aerial_noise_scale >= c.ground_noise_scale,
                  "scenario.aerial_noise_scale must be >= ground_noise_scale");
  detail::require(
      c.token_dropout_prob >= 0.0 && c.token_dropout_prob < 1.0,
      "scenario.token_dropout_prob must lie in [0, 1)");
  detail::require(c.altitude_spread >= 0.0 && c.altitude_spread <= 1.0,
                  "scenario.altitude_spread must lie in [0, 1]");
  detail::require(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0,
                  "scenario.holdout_fraction must lie in (0, 1)");
  return c;
}

inline AlignmentConfig align_from_json(const nlohmann::json& obj) {
  detail::reject_unknown_keys(
      obj, {"k", "tau", "eps", "query_tokens", "self_blocks", "fta_weight"},
      "align");
  AlignmentConfig c;
  detail::read_field(obj, "align", "k", c.k);
  detail::read_field(obj, "align", "tau", c.tau);
  detail::read_field(obj, "align", "eps", c.eps);
  detail::read_field(obj, "align", "query_tokens", c.query_tokens);
  detail::read_field(obj, "align", "self_blocks", c.self_blocks);
  detail::read_field(obj, "align", "fta_weight", c.fta_weight);

  detail::require(c.k > 0.0, "align.k must be > 0");
  detail::require(c.tau > 0.0, "align.tau must be > 0");
  detail::require(c.eps >= 0.0, "align.eps must be >= 0");
  detail::require(c.query_tokens >= 1, "align.query_tokens must be >= 1");
  detail::require(c.fta_weight >= 0.0, "align.fta_weight must be >= 0");
  return c;
}

inline TrainConfig train_from_json(const nlohmann::json& obj) {
  detail::reject_unknown_keys(obj,
                              {"steps", "batch_size", "learning_rate",
                               "grad_clip_norm", "seed", "eval_ks"},
                              "train");
  TrainConfig c;
  detail::read_field(obj, "train", "steps", c.steps);
  detail::read_field(obj, "train", "batch_size", c.batch_size);
  detail::read_field(obj, "train", "learning_rate", c.learning_rate);
  detail::read_field(obj, "train", "grad_clip_norm", c.grad_clip_norm);
  detail::read_field(obj, "train", "seed", c.seed);
  detail::read_field(obj, "train", "eval_ks", c.eval_ks);

  detail::require(c.steps >= 1, "train.steps must be >= 1");
  detail::require(c.batch_size >= 2, "train.batch_size must be >= 2");
  detail::require(c.learning_rate > 0.0, "train.learning_rate must be > 0");
  detail::require(c.grad_clip_norm >= 0.0,
                  "train.grad_clip_norm must be >= 0");
  detail::require(!c.eval_ks.empty(), "train.eval_ks must not be empty");
  return c;
}

inline RunConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ConfigInvalidError("config root must be a JSON object");
  }
  detail::reject_unknown_keys(doc, {"scenario", "align", "train"}, "config");
  RunConfig c;
  if (doc.contains("scenario")) c.scenario = scenario_from_json(doc["scenario"]);
  if (doc.contains("align")) c.align = align_from_json(doc["align"]);
  if (doc.contains("train")) c.train = train_from_json(doc["train"]);
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  return nlohmann::json{
      {"scenario",
       {{"num_identities", c.scenario.num_identities},
        {"captions_per_identity", c.scenario.captions_per_identity},
        {"aerial_images_per_identity", c.scenario.aerial_images_per_identity},
        {"ground_images_per_identity", c.scenario.ground_images_per_identity},
        {"dim", c.scenario.dim},
        {"tokens_per_sample", c.scenario.tokens_per_sample},
        {"attribute_pool_size", c.scenario.attribute_pool_size},
        {"text_noise_scale", c.scenario.text_noise_scale},
        {"aerial_noise_scale", c.scenario.aerial_noise_scale},
        {"ground_noise_scale", c.scenario.ground_noise_scale},
        {"token_dropout_prob", c.scenario.token_dropout_prob},
        {"altitude_spread", c.scenario.altitude_spread},
        {"holdout_fraction", c.scenario.holdout_fraction},
        {"seed", c.scenario.seed}}},
      {"align",
       {{"k", c.align.k},
        {"tau", c.align.tau},
        {"eps", c.align.eps},
        {"query_tokens", c.align.query_tokens},
        {"self_blocks", c.align.self_blocks},
        {"fta_weight", c.align.fta_weight}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"grad_clip_norm", c.train.grad_clip_norm},
        {"seed", c.train.seed},
        {"eval_ks", c.train.eval_ks}}}};
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigInvalidError("cannot open config file " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalidError("config is not valid JSON: " +
                             std::string(e.what()));
  }
  return config_from_json(doc);
}

/// FNV-1a over the sorted-key JSON dump; stable fingerprint for manifests.
inline std::uint64_t config_hash(const RunConfig& c) {
  const std::string dump = config_to_json(c).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char byte : dump) {
    h ^= byte;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace fuzzyalign
