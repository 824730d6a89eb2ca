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

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fuzzyalign/checkpoint.hpp"
#include "fuzzyalign/config.hpp"
#include "fuzzyalign/embedding_file.hpp"
#include "fuzzyalign/error.hpp"
#include "fuzzyalign/grad_check.hpp"
#include "fuzzyalign/metrics.hpp"
#include "fuzzyalign/synthetic.hpp"
#include "fuzzyalign/train.hpp"

namespace fuzzyalign {

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string hex_u64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Confirms a previously generated world directory matches this config.
inline void check_world_manifest(const std::filesystem::path& world_dir,
                                 const RunConfig& config) {
  const std::filesystem::path manifest_path = world_dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) {
    throw ConfigInvalidError("world manifest not found: " +
                             manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(manifest_path.string() + ": " + e.what());
  }
  const std::string expected = hex_u64(config_hash(config));
  const std::string actual = manifest.value("config_hash", std::string());
  if (actual != expected) {
    throw ConfigInvalidError("world at " + world_dir.string() +
                             " was generated from a different config (hash " +
                             actual + ", expected " + expected + ")");
  }
}

}  // namespace detail

inline int cmd_generate(const std::filesystem::path& config_path,
                        const std::filesystem::path& out_dir,
                        std::optional<std::uint64_t> seed_override) {
  RunConfig config = load_config(config_path);
  if (seed_override) config.scenario.seed = *seed_override;
  const SyntheticWorld world = generate(config.scenario);

  std::filesystem::create_directories(out_dir);
  write_embedding_file(out_dir / "text.embf", world.text_features,
                       &world.text_ids);
  write_embedding_file(out_dir / "aerial.embf", world.aerial_features,
                       &world.aerial_ids);
  std::vector<std::string> files = {"text.embf", "aerial.embf"};
  if (world.has_ground) {
    write_embedding_file(out_dir / "ground.embf", world.ground_features,
                         &world.ground_ids);
    files.push_back("ground.embf");
  }
  detail::write_file_atomic(out_dir / "config.json",
                            config_to_json(config).dump(2) + "\n");

  nlohmann::json manifest{
      {"config_hash", detail::hex_u64(config_hash(config))},
      {"seed", config.scenario.seed},
      {"created", detail::utc_timestamp()},
      {"files", files},
      {"num_identities", config.scenario.num_identities},
      {"train_identities", world.train_identities.size()},
      {"eval_identities", world.eval_identities.size()}};
  detail::write_file_atomic(out_dir / "manifest.json",
                            manifest.dump(2) + "\n");

  std::cout << "world written to " << out_dir.string() << " ("
            << world.text_ids.size() << " text, " << world.aerial_ids.size()
            << " aerial"
            << (world.has_ground
                    ? ", " + std::to_string(world.ground_ids.size()) + " ground"
                    : std::string(", no ground modality"))
            << ")\n";
  return 0;
}

inline int cmd_train(const std::filesystem::path& config_path,
                     const std::string& variant_name_arg,
                     const std::filesystem::path& out_dir,
                     std::optional<std::uint64_t> seed_override,
                     const std::optional<std::filesystem::path>& world_dir) {
  RunConfig config = load_config(config_path);
  if (seed_override) config.train.seed = *seed_override;
  const Variant variant = parse_variant(variant_name_arg);
  if (world_dir) detail::check_world_manifest(*world_dir, config);

  const SyntheticWorld world = generate(config.scenario);
  if (variant_uses_gate(variant) && !world.has_ground) {
    std::cout << "note: world has no ground modality; the gated loss "
                 "degenerates to plain similarity distribution matching\n";
  }
  ExperimentResult result =
      run_experiment(world, variant, config.align, config.train);

  std::filesystem::create_directories(out_dir);

  std::string trace;
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    nlohmann::json row{{"step", i}, {"loss", result.loss_trace[i]}};
    if (i < result.alpha_mean_trace.size()) {
      row["alpha_mean"] = result.alpha_mean_trace[i];
    }
    trace += row.dump() + "\n";
  }
  detail::write_file_atomic(out_dir / "trace.jsonl", trace);

  NamedTensors tensors;
  visit_trainables(result.state, [&](const std::string& name, Matrix& m) {
    tensors.emplace_back(name, m);
  });
  save_checkpoint(out_dir / "checkpoint.fzck", tensors);

  detail::write_file_atomic(out_dir / "report.json",
                            report_to_json(result.report).dump(2) + "\n");
  detail::write_file_atomic(out_dir / "report.txt",
                            report_to_table(result.report));

  nlohmann::json manifest{
      {"config_hash", detail::hex_u64(config_hash(config))},
      {"variant", variant_name(variant)},
      {"train_seed", config.train.seed},
      {"scenario_seed", config.scenario.seed},
      {"steps", result.loss_trace.size()},
      {"degenerated", result.degenerated},
      {"created", detail::utc_timestamp()}};
  detail::write_file_atomic(out_dir / "manifest.json",
                            manifest.dump(2) + "\n");

  std::cout << "variant " << variant_name(variant) << ": loss "
            << detail::format_double(result.loss_trace.front()) << " -> "
            << detail::format_double(result.loss_trace.back()) << " over "
            << result.loss_trace.size() << " steps\n";
  std::cout << report_to_table(result.report);
  return 0;
}

inline int cmd_eval(const std::filesystem::path& query_path,
                    const std::filesystem::path& gallery_path,
                    const std::filesystem::path& out_dir) {
  const EmbeddingData query = read_embedding_file(query_path);
  const EmbeddingData gallery = read_embedding_file(gallery_path);
  if (query.ids.empty() || query.features.rows() == 0) {
    throw CorruptFileError(query_path.string() +
                           ": evaluation needs a non-empty query file with "
                           "identity ids");
  }
  if (gallery.ids.empty() || gallery.features.rows() == 0) {
    throw CorruptFileError(gallery_path.string() +
                           ": evaluation needs a non-empty gallery file with "
                           "identity ids");
  }
  RetrievalTask task{query.features, gallery.features, query.ids,
                     gallery.ids};
  const MetricReport report = evaluate(task);

  std::filesystem::create_directories(out_dir);
  detail::write_file_atomic(out_dir / "report.json",
                            report_to_json(report).dump(2) + "\n");
  detail::write_file_atomic(out_dir / "report.txt", report_to_table(report));
  std::cout << report_to_table(report);
  return 0;
}

/// Rebuilds a TrainState from checkpoint tensors.
inline TrainState state_from_tensors(const NamedTensors& tensors) {
  TrainState state;
  std::size_t blocks = 0;
  for (const auto& [name, _] : tensors) {
    if (name.rfind("fta.self", 0) == 0) {
      const std::size_t dot = name.find('.', 8);
      blocks = std::max(blocks,
                        std::stoul(name.substr(8, dot - 8)) + 1);
    }
  }
  for (const auto& [name, m] : tensors) {
    if (name == "fta.query") state.has_fta = true;
    if (name == "proj.ground") state.has_ground = true;
    (void)m;
  }
  if (state.has_fta) state.fta.former.blocks.resize(blocks);

  auto find = [&](const std::string& name) -> const Matrix* {
    for (const auto& [n, m] : tensors) {
      if (n == name) return &m;
    }
    return nullptr;
  };
  const Matrix* wt = find("proj.text");
  const Matrix* wa = find("proj.aerial");
  if (wt == nullptr || wa == nullptr) {
    throw CorruptFileError("checkpoint lacks projection tensors");
  }
  state.w_text = *wt;
  state.w_aerial = *wa;
  if (state.has_ground) state.w_ground = *find("proj.ground");
  if (state.has_fta) {
    visit_fta(state.fta, [&](const std::string& name, Matrix& m) {
      const Matrix* src = find("fta." + name);
      if (src == nullptr) {
        throw CorruptFileError("checkpoint lacks tensor fta." + name);
      }
      m = *src;
    });
  }
  return state;
}

inline int cmd_analyze(const std::filesystem::path& checkpoint_path,
                       const std::filesystem::path& config_path,
                       const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& world_dir) {
  const RunConfig config = load_config(config_path);
  if (world_dir) detail::check_world_manifest(*world_dir, config);
  const TrainState state = state_from_tensors(load_checkpoint(checkpoint_path));
  const SyntheticWorld world = generate(config.scenario);

  std::filesystem::create_directories(out_dir);

  if (world.has_ground) {
    const std::vector<GateDiagnosticsRow> gate =
        gate_diagnostics(world, state, config.align.k);
    std::string csv = "aerial_sample,identity,altitude,delta,alpha\n";
    std::vector<double> deltas;
    deltas.reserve(gate.size());
    for (const GateDiagnosticsRow& row : gate) {
      csv += std::to_string(row.aerial_sample) + "," +
             std::to_string(row.identity) + "," +
             detail::format_double(row.altitude) + "," +
             detail::format_double(row.delta) + "," +
             detail::format_double(row.alpha) + "\n";
      deltas.push_back(row.delta);
    }
    detail::write_file_atomic(out_dir / "gate.csv", csv);

    std::string sweep_csv = "k,alpha_variance\n";
    for (const auto& [k, var] :
         alpha_variance_sweep(deltas, {1, 2, 4, 8, 12, 16})) {
      sweep_csv += detail::format_double(k) + "," +
                   detail::format_double(var) + "\n";
    }
    detail::write_file_atomic(out_dir / "alpha_variance.csv", sweep_csv);
  } else {
    std::cout << "note: no ground modality, skipping gate dump\n";
  }

  if (state.has_fta) {
    const std::vector<MembershipDiagnosticsRow> memberships =
        membership_diagnostics(world, state);
    std::string csv =
        "aerial_sample,identity,token,visible,mu_aerial,mu_text,mu_joint\n";
    for (const MembershipDiagnosticsRow& row : memberships) {
      csv += std::to_string(row.aerial_sample) + "," +
             std::to_string(row.identity) + "," + std::to_string(row.token) +
             "," + std::to_string(static_cast<int>(row.visible)) + "," +
             detail::format_double(row.mu_a) + "," +
             detail::format_double(row.mu_t) + "," +
             detail::format_double(row.mu_joint) + "\n";
    }
    detail::write_file_atomic(out_dir / "memberships.csv", csv);
  } else {
    std::cout << "note: checkpoint has no token alignment parameters, "
                 "skipping membership dump\n";
  }

  std::cout << "analysis written to " << out_dir.string() << "\n";
  return 0;
}

struct GradCheckEntry {
  std::string loss;
  std::size_t batch = 0;
  std::size_t dim = 0;
  double error = 0.0;
};

/// Gradient verification across the three losses at small sizes.
inline std::vector<GradCheckEntry> run_gradcheck_suite(double tau = 0.05,
                                                       double eps = 1e-8,
                                                       double step = 1e-4) {
  std::vector<GradCheckEntry> entries;
  std::mt19937_64 rng(2024);

  const auto ids_for = [](std::size_t b) {
    std::vector<std::uint32_t> ids(b);
    for (std::size_t i = 0; i < b; ++i) {
      ids[i] = static_cast<std::uint32_t>(i % 2);
    }
    return ids;
  };

  for (std::size_t b : {2, 4}) {
    for (std::size_t d : {4, 8}) {
      Tape tape;
      Var a = tape.input(Matrix::randn(b, d, 1.0, rng));
      Var c = tape.input(Matrix::randn(b, d, 1.0, rng));
      Var loss = sdm_graph(tape, a, c, ids_for(b), tau, eps).total;
      entries.push_back({"sdm", b, d, grad_check(tape, loss, {a, c}, step)});
    }
  }

  for (std::size_t b : {2, 4}) {
    for (std::size_t d : {4, 8}) {
      Tape tape;
      Var text = tape.input(Matrix::randn(b, d, 1.0, rng));
      Var aerial = tape.input(Matrix::randn(b, d, 1.0, rng));
      Var ground = tape.input(Matrix::randn(b, d, 1.0, rng));
      CdaGraph graph = cda_graph(tape, text, aerial, ground, ids_for(b), 1.0,
                                 tau, eps);
      entries.push_back(
          {"cda_loss", b, d,
           grad_check(tape, graph.loss_total, {text, aerial, ground}, step)});
    }
  }

  const std::size_t k = 2, n = 3;
  for (std::size_t b : {2, 4}) {
    for (std::size_t d : {4, 8}) {
      FtaParams params = FtaParams::init(d, k, 2, rng);
      params.sigma_text.w2 = Matrix::randn(d, 1, kInitScale, rng);
      params.sigma_aerial.w2 = Matrix::randn(d, 1, kInitScale, rng);

      Tape tape;
      FtaVars vars = lift(tape, params, true);
      std::vector<Var> text_tok, aerial_tok, wrt;
      for (std::size_t i = 0; i < b; ++i) {
        text_tok.push_back(tape.input(Matrix::randn(n, d, 1.0, rng)));
        aerial_tok.push_back(tape.input(Matrix::randn(n, d, 1.0, rng)));
      }
      FtaSimilarityGraph sim =
          fta_similarity_graph(tape, aerial_tok, text_tok, vars);
      Var loss =
          fta_loss_from_similarity(tape, sim.similarity, ids_for(b), tau, eps);
      visit_fta(vars, [&](const std::string&, Var v) { wrt.push_back(v); });
      for (Var v : text_tok) wrt.push_back(v);
      for (Var v : aerial_tok) wrt.push_back(v);
      entries.push_back(
          {"fta_loss", b, d, grad_check(tape, loss, wrt, step)});
    }
  }
  return entries;
}

inline int cmd_gradcheck() {
  const std::vector<GradCheckEntry> entries = run_gradcheck_suite();
  double worst = 0.0;
  std::printf("%-10s %5s %5s  %s\n", "loss", "B", "D", "worst error");
  for (const GradCheckEntry& e : entries) {
    std::printf("%-10s %5zu %5zu  %.3e\n", e.loss.c_str(), e.batch, e.dim,
                e.error);
    worst = std::max(worst, e.error);
  }
  std::printf("worst overall: %.3e (tolerance 1e-4)\n", worst);
  return worst <= 1e-4 ? 0 : 1;
}

}  // namespace fuzzyalign
