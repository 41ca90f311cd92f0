/*
 * Copyright 2026 The WoRA Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Retrieval metrics: Recall@K and (mean) average precision over ranked
// candidate lists, plus cosine top-k candidate generation.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "wora/embio.hpp"
#include "wora/error.hpp"
#include "wora/linalg.hpp"
#include "wora/parallel.hpp"

namespace wora {

inline constexpr std::size_t kDefaultCandidates = 128;

struct RetrievalRanking {
  std::string query_id;
  std::vector<std::size_t> ranked_gallery;  // best first, no duplicates
  std::set<std::size_t> relevant;
  // Size of the gallery the candidates were drawn from; 0 means the list is
  // the full ranking.
  std::size_t gallery_size = 0;

  bool truncated() const noexcept { return gallery_size > ranked_gallery.size(); }
};

namespace detail {

inline void require_depth(const RetrievalRanking& r, std::size_t k) {
  if (r.truncated() && k > r.ranked_gallery.size()) {
    throw ConfigError("metric cut-off k=" + std::to_string(k) + " exceeds the " +
                      std::to_string(r.ranked_gallery.size()) + " retrieved candidates of query '" +
                      r.query_id + "'");
  }
}

}  // namespace detail

inline double recall_at_k(const std::vector<RetrievalRanking>& rankings, std::size_t k) {
  if (k < 1) throw ConfigError("recall_at_k: k must be >= 1");
  if (rankings.empty()) throw ConfigError("recall_at_k: no rankings");
  std::size_t hits = 0;
  for (const auto& r : rankings) {
    detail::require_depth(r, k);
    const std::size_t depth = std::min(k, r.ranked_gallery.size());
    for (std::size_t p = 0; p < depth; ++p) {
      if (r.relevant.contains(r.ranked_gallery[p])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

// (1/|relevant|) Σ_{hit positions p} hits_up_to_p / p. Relevant items missing
// from a truncated list contribute zero.
inline double average_precision(const RetrievalRanking& r) {
  if (r.relevant.empty()) {
    throw ConfigError("average_precision: query '" + r.query_id + "' has no relevant items");
  }
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < r.ranked_gallery.size(); ++p) {
    if (!r.relevant.contains(r.ranked_gallery[p])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(p + 1);
  }
  return sum / static_cast<double>(r.relevant.size());
}

inline double mean_average_precision(const std::vector<RetrievalRanking>& rankings) {
  if (rankings.empty()) throw ConfigError("mean_average_precision: no rankings");
  double sum = 0.0;
  for (const auto& r : rankings) sum += average_precision(r);
  return sum / static_cast<double>(rankings.size());
}

// relevance[q] = gallery indices relevant to query q.
using Relevance = std::vector<std::set<std::size_t>>;

// Query q is relevant to every gallery row carrying the same id.
inline Relevance relevance_by_id(const std::vector<std::string>& query_ids,
                                 const std::vector<std::string>& gallery_ids) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_id;
  for (std::size_t g = 0; g < gallery_ids.size(); ++g) by_id[gallery_ids[g]].push_back(g);
  Relevance rel(query_ids.size());
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    if (auto it = by_id.find(query_ids[q]); it != by_id.end()) {
      rel[q].insert(it->second.begin(), it->second.end());
    }
  }
  return rel;
}

// Top-k_candidates gallery rows per query by cosine similarity.
inline std::vector<RetrievalRanking> build_rankings(const EmbeddingMatrix& queries,
                                                    const EmbeddingMatrix& gallery,
                                                    const Relevance& relevance,
                                                    std::size_t k_candidates = kDefaultCandidates,
                                                    std::size_t threads = 1) {
  if (queries.dim() != gallery.dim()) {
    throw ShapeError("build_rankings: query dim " + std::to_string(queries.dim()) +
                     " != gallery dim " + std::to_string(gallery.dim()));
  }
  if (relevance.size() != queries.rows()) {
    throw ShapeError("build_rankings: relevance has " + std::to_string(relevance.size()) +
                     " entries for " + std::to_string(queries.rows()) + " queries");
  }
  if (k_candidates < 1) throw ConfigError("build_rankings: k_candidates must be >= 1");
  const CosineGallery cached(gallery.matrix);
  std::vector<RetrievalRanking> out(queries.rows());
  parallel_for(queries.rows(), threads, [&](std::size_t q) {
    const RowVector scores = cached.scores(queries.matrix.row(q));
    auto& r = out[q];
    r.query_id = q < queries.ids.size() ? queries.ids[q] : std::to_string(q);
    r.ranked_gallery = top_k_indices(scores, k_candidates);
    r.relevant = relevance[q];
    r.gallery_size = gallery.rows();
  });
  return out;
}

struct EvalSummary {
  std::map<std::size_t, double> recall;
  double map = 0.0;
  std::size_t queries = 0;
};

inline EvalSummary evaluate(const std::vector<RetrievalRanking>& rankings,
                            const std::vector<std::size_t>& ks = {1, 5, 10}) {
  EvalSummary s;
  for (std::size_t k : ks) s.recall[k] = recall_at_k(rankings, k);
  s.map = mean_average_precision(rankings);
  s.queries = rankings.size();
  return s;
}

inline Json eval_to_json(const EvalSummary& s) {
  Json j;
  for (const auto& [k, v] : s.recall) j["recall"][std::to_string(k)] = v;
  j["map"] = s.map;
  j["queries"] = s.queries;
  return j;
}

}  // namespace wora
