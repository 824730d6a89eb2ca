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

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fuzzyalign/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cross-view alignment sandbox"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string variant = "cda_fta";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> world_dir;

  CLI::App* generate = app.add_subcommand(
      "generate", "sample a synthetic cross-view world and write embeddings");
  generate->add_option("--config", config_path, "run config (JSON)")
      ->required();
  generate->add_option("--out", out_dir, "output directory");
  generate->add_option("--seed", seed, "override the scenario seed");

  CLI::App* train = app.add_subcommand(
      "train", "fit projections on a synthetic world and report retrieval");
  train->add_option("--config", config_path, "run config (JSON)")->required();
  train->add_option("--variant", variant,
                    "baseline_sdm | cda | cda_fta | fta_unweighted");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--seed", seed, "override the training seed");
  train->add_option("world", world_dir,
                    "previously generated world directory (checked against "
                    "the config)");

  std::string query_path, gallery_path;
  CLI::App* eval = app.add_subcommand(
      "eval", "score retrieval between two embedding files");
  eval->add_option("query", query_path, "query embedding file")->required();
  eval->add_option("gallery", gallery_path, "gallery embedding file")
      ->required();
  eval->add_option("--out", out_dir, "output directory");

  std::string checkpoint_path;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "dump gate and membership diagnostics for a checkpoint");
  analyze->add_option("checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  analyze->add_option("--config", config_path, "run config (JSON)")
      ->required();
  analyze->add_option("--out", out_dir, "output directory");
  analyze->add_option("world", world_dir,
                      "previously generated world directory (checked against "
                      "the config)");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "verify analytic gradients against finite differences");

  CLI11_PARSE(app, argc, argv);

  try {
    std::optional<std::filesystem::path> world;
    if (world_dir) world = *world_dir;
    if (generate->parsed()) {
      return fuzzyalign::cmd_generate(config_path, out_dir, seed);
    }
    if (train->parsed()) {
      return fuzzyalign::cmd_train(config_path, variant, out_dir, seed, world);
    }
    if (eval->parsed()) {
      return fuzzyalign::cmd_eval(query_path, gallery_path, out_dir);
    }
    if (analyze->parsed()) {
      return fuzzyalign::cmd_analyze(checkpoint_path, config_path, out_dir,
                                     world);
    }
    if (gradcheck->parsed()) {
      return fuzzyalign::cmd_gradcheck();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
