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
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"
#include "fuzzyalign/ops.hpp"

#include "json.hpp"

namespace fuzzyalign {

struct RetrievalTask {
  Matrix query_features;    // Q x D
  Matrix gallery_features;  // G x D
  std::vector<std::uint32_t> query_ids;
  std::vector<std::uint32_t> gallery_ids;
};

struct MetricReport {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double map = 0.0;
  double rsum = 0.0;
  // Rank-k for every requested cutoff, in request order.
  std::vector<std::pair<std::size_t, double>> rank_at;
};

namespace detail {

/// Worker count for per-query parallelism. FUZZYALIGN_THREADS caps it;
/// unset or invalid means hardware concurrency.
inline std::size_t metric_thread_count(std::size_t jobs) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FUZZYALIGN_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end != env && parsed >= 1) {
      n = std::min<std::size_t>(n, static_cast<std::size_t>(parsed));
    }
  }
  return std::min(n, std::max<std::size_t>(1, jobs));
}

template <typename Fn>
void parallel_for(std::size_t jobs, Fn&& fn) {
  const std::size_t workers = metric_thread_count(jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < jobs; i += workers) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace detail

inline void validate_task(const RetrievalTask& task) {
  if (task.query_features.rows() != task.query_ids.size() ||
      task.gallery_features.rows() != task.gallery_ids.size() ||
      task.query_features.cols() != task.gallery_features.cols()) {
    throw ShapeError("retrieval task fields disagree on shape");
  }
  for (std::size_t q = 0; q < task.query_ids.size(); ++q) {
    const bool present =
        std::find(task.gallery_ids.begin(), task.gallery_ids.end(),
                  task.query_ids[q]) != task.gallery_ids.end();
    if (!present) {
      throw OrphanQueryError("query " + std::to_string(q) + " (identity " +
                             std::to_string(task.query_ids[q]) +
                             ") has no gallery match");
    }
  }
}

/// Gallery indices for one query, best match first. Descending cosine,
/// ties broken by ascending gallery index.
inline std::vector<std::size_t> rank_query(const RetrievalTask& task,
                                           std::size_t q) {
  const std::size_t g = task.gallery_features.rows();
  std::vector<double> sims(g);
  for (std::size_t i = 0; i < g; ++i) {
    sims[i] = cosine_sim_rows(task.query_features, q, task.gallery_features, i);
  }
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  return order;
}

/// Full deterministic rankings for every query.
inline std::vector<std::vector<std::size_t>> rank_all(
    const RetrievalTask& task) {
  validate_task(task);
  std::vector<std::vector<std::size_t>> out(task.query_ids.size());
  detail::parallel_for(out.size(),
                       [&](std::size_t q) { out[q] = rank_query(task, q); });
  return out;
}

inline MetricReport evaluate(const RetrievalTask& task,
                             const std::vector<std::size_t>& ks = {1, 5, 10}) {
  validate_task(task);
  const std::size_t nq = task.query_ids.size();
  if (nq == 0) throw ShapeError("evaluate: no queries");

  std::vector<std::vector<std::size_t>> hit_flags(ks.size());
  for (auto& flags : hit_flags) flags.assign(nq, 0);
  std::vector<double> ap(nq, 0.0);

  detail::parallel_for(nq, [&](std::size_t q) {
    const std::vector<std::size_t> order = rank_query(task, q);
    std::size_t first_hit = order.size();
    std::size_t positives_seen = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (task.gallery_ids[order[rank]] != task.query_ids[q]) continue;
      if (first_hit == order.size()) first_hit = rank;
      ++positives_seen;
      precision_sum += static_cast<double>(positives_seen) /
                       static_cast<double>(rank + 1);
    }
    ap[q] = precision_sum / static_cast<double>(positives_seen);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      hit_flags[i][q] = first_hit < ks[i] ? 1 : 0;
    }
  });

  MetricReport report;
  const auto percent = [nq](std::size_t hits) {
    return 100.0 * static_cast<double>(hits) / static_cast<double>(nq);
  };
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const std::size_t hits =
        std::accumulate(hit_flags[i].begin(), hit_flags[i].end(),
                        std::size_t{0});
    report.rank_at.emplace_back(ks[i], percent(hits));
    if (ks[i] == 1) report.rank1 = percent(hits);
    if (ks[i] == 5) report.rank5 = percent(hits);
    if (ks[i] == 10) report.rank10 = percent(hits);
  }
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) ap_sum += ap[q];
  report.map = 100.0 * ap_sum / static_cast<double>(nq);
  report.rsum = report.rank1 + report.rank5 + report.rank10;
  return report;
}

inline nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json ranks = nlohmann::json::object();
  for (const auto& [k, value] : report.rank_at) {
    ranks["rank" + std::to_string(k)] = value;
  }
  return nlohmann::json{{"rank1", report.rank1},
                        {"rank5", report.rank5},
                        {"rank10", report.rank10},
                        {"map", report.map},
                        {"rsum", report.rsum},
                        {"rank_at", ranks}};
}

inline std::string report_to_table(const MetricReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "metric      value\n";
  out << "-----------------\n";
  for (const auto& [k, value] : report.rank_at) {
    std::string label = "rank" + std::to_string(k);
    label.resize(10, ' ');
    out << label << ' ';
    out.width(6);
    out << value << '\n';
  }
  out << "map        ";
  out.width(6);
  out << report.map << '\n';
  out << "rsum       ";
  out.width(6);
  out << report.rsum << '\n';
  return out.str();
}

}  // namespace fuzzyalign
