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

// Similarity-rank coreset filter for paired image/text embeddings.
//
// For each pair, the image is compared with its own text (self similarity)
// and with a seeded sample of distractor texts. The pair's rank is one plus
// the number of distractors strictly more similar to the image than its own
// text, and the pair is kept iff rank <= rank_threshold.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "wora/embio.hpp"
#include "wora/error.hpp"
#include "wora/linalg.hpp"
#include "wora/parallel.hpp"
#include "wora/rng.hpp"

namespace wora {

struct PairedDataset {
  EmbeddingMatrix images;
  EmbeddingMatrix texts;
  std::vector<std::string> pair_ids;

  std::size_t size() const noexcept { return pair_ids.size(); }
  std::size_t dim() const noexcept { return images.dim(); }
};

inline void validate(const PairedDataset& d) {
  if (d.images.rows() != d.texts.rows() || d.images.rows() != d.pair_ids.size()) {
    throw ShapeError("paired dataset has " + std::to_string(d.images.rows()) + " images, " +
                     std::to_string(d.texts.rows()) + " texts and " +
                     std::to_string(d.pair_ids.size()) + " pair ids");
  }
  if (d.images.dim() != d.texts.dim()) {
    throw ShapeError("image dim " + std::to_string(d.images.dim()) + " != text dim " +
                     std::to_string(d.texts.dim()));
  }
}

// Rows of `d` whose mask entry is true, in order.
inline PairedDataset select_pairs(const PairedDataset& d, const std::vector<bool>& keep) {
  if (keep.size() != d.size()) throw ShapeError("select_pairs: mask length mismatch");
  const auto n = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  PairedDataset out;
  out.images.matrix = Matrix(n, d.dim());
  out.texts.matrix = Matrix(n, d.dim());
  std::size_t k = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!keep[i]) continue;
    std::copy(d.images.matrix.row(i).begin(), d.images.matrix.row(i).end(),
              out.images.matrix.row(k).begin());
    std::copy(d.texts.matrix.row(i).begin(), d.texts.matrix.row(i).end(),
              out.texts.matrix.row(k).begin());
    out.images.ids.push_back(d.images.ids[i]);
    out.texts.ids.push_back(d.texts.ids[i]);
    out.pair_ids.push_back(d.pair_ids[i]);
    ++k;
  }
  return out;
}

struct DistractorPool {
  EmbeddingMatrix embeddings;
  std::string source_tag;

  std::size_t size() const noexcept { return embeddings.rows(); }
};

struct FilterConfig {
  std::size_t rank_threshold = 50;
  std::size_t distractor_count = 10000;
  std::uint64_t seed = 0;
  bool shared_sample = true;
};

inline void validate(const FilterConfig& cfg, std::size_t pool_size) {
  if (cfg.rank_threshold < 1) throw ConfigError("rank_threshold must be >= 1");
  if (cfg.distractor_count < 1) throw ConfigError("distractor_count must be >= 1");
  if (cfg.distractor_count > pool_size) {
    throw ConfigError("distractor_count " + std::to_string(cfg.distractor_count) +
                      " exceeds distractor pool size " + std::to_string(pool_size));
  }
}

struct PairRecord {
  std::string pair_id;
  double self_sim = 0.0;
  std::size_t rank = 1;
  double max_distractor_sim = 0.0;
  bool kept = false;
};

struct FilterReport {
  std::vector<PairRecord> records;
  std::size_t retained = 0;
  std::size_t total = 0;
  double retention_rate = 0.0;
  FilterConfig config;
  // Zero-norm rows seen among images, texts and the distractor pool. Their
  // cosine with anything is defined as 0.
  std::size_t zero_vector_warnings = 0;
};

// Distinct pool indices, partial Fisher-Yates over a xoshiro256** stream.
// Shared mode seeds from cfg.seed; per-pair mode from (cfg.seed, pair_index).
inline std::vector<std::size_t> sample_distractors(std::size_t pool_size, const FilterConfig& cfg,
                                                   std::size_t pair_index) {
  validate(cfg, pool_size);
  Xoshiro256 rng(cfg.shared_sample ? cfg.seed : derive_seed(cfg.seed, pair_index));
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < cfg.distractor_count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool_size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cfg.distractor_count);
  return idx;
}

inline std::vector<std::size_t> sample_distractors(const DistractorPool& pool,
                                                   const FilterConfig& cfg,
                                                   std::size_t pair_index) {
  return sample_distractors(pool.size(), cfg, pair_index);
}

// 1 + number of distractor similarities strictly above self_sim.
inline std::size_t rank_pair(double self_sim, std::span<const double> distractor_sims) {
  std::size_t above = 0;
  for (double d : distractor_sims) above += d > self_sim ? 1 : 0;
  return 1 + above;
}

namespace detail {

// Rows scaled to unit length; zero rows stay zero.
inline Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double n = std::sqrt(dot(r, r));
    if (n == 0.0) continue;
    for (auto& v : r) v /= n;
  }
  return out;
}

inline std::size_t count_zero_rows(const Matrix& m) {
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    zeros += std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; }) ? 1 : 0;
  }
  return zeros;
}

}  // namespace detail

inline FilterReport filter_dataset(const PairedDataset& data, const DistractorPool& pool,
                                   const FilterConfig& cfg, std::size_t threads = 1) {
  validate(data);
  validate(cfg, pool.size());
  if (data.size() == 0) throw ConfigError("filter_dataset: empty dataset");
  if (pool.embeddings.dim() != data.dim()) {
    throw ShapeError("distractor dim " + std::to_string(pool.embeddings.dim()) +
                     " != dataset dim " + std::to_string(data.dim()));
  }
  const Matrix pool_unit = detail::normalize_rows(pool.embeddings.matrix);
  std::vector<std::size_t> shared;
  if (cfg.shared_sample) shared = sample_distractors(pool.size(), cfg, 0);

  FilterReport report;
  report.config = cfg;
  report.total = data.size();
  report.records.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto image = data.images.matrix.row(i);
    const auto text = data.texts.matrix.row(i);
    const std::vector<std::size_t> own = cfg.shared_sample ? std::vector<std::size_t>{}
                                                           : sample_distractors(pool.size(), cfg, i);
    const auto& sample = cfg.shared_sample ? shared : own;
    const double image_norm = std::sqrt(dot(image, image));
    std::vector<double> sims(sample.size(), 0.0);
    if (image_norm != 0.0) {
      for (std::size_t k = 0; k < sample.size(); ++k) {
        sims[k] = dot(image, pool_unit.row(sample[k])) / image_norm;
      }
    }
    PairRecord& rec = report.records[i];
    rec.pair_id = data.pair_ids[i];
    rec.self_sim = cosine_similarity(image, text);
    rec.rank = rank_pair(rec.self_sim, sims);
    rec.max_distractor_sim = *std::max_element(sims.begin(), sims.end());
    rec.kept = rec.rank <= cfg.rank_threshold;
  });
  for (const auto& r : report.records) report.retained += r.kept ? 1 : 0;
  report.retention_rate = static_cast<double>(report.retained) / static_cast<double>(report.total);
  report.zero_vector_warnings = detail::count_zero_rows(data.images.matrix) +
                                detail::count_zero_rows(data.texts.matrix) +
                                detail::count_zero_rows(pool.embeddings.matrix);
  return report;
}

inline std::vector<bool> kept_mask(const FilterReport& report) {
  std::vector<bool> mask(report.records.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = report.records[i].kept;
  return mask;
}

inline constexpr std::size_t kRankHistogramBuckets = 32;

struct RankHistogram {
  std::vector<double> edges;         // kRankHistogramBuckets + 1 log-spaced edges
  std::vector<std::size_t> counts;   // bucket k holds ranks in [edges[k], edges[k+1])
};

// Ranks lie in [1, distractor_count + 1]; edges run from 1 to
// distractor_count + 2 so the largest rank lands in the last bucket.
inline RankHistogram rank_histogram(const FilterReport& report) {
  RankHistogram h;
  const double top = static_cast<double>(report.config.distractor_count + 2);
  h.edges.resize(kRankHistogramBuckets + 1);
  for (std::size_t k = 0; k <= kRankHistogramBuckets; ++k) {
    h.edges[k] = std::pow(top, static_cast<double>(k) / kRankHistogramBuckets);
  }
  h.edges.front() = 1.0;
  h.edges.back() = top;
  h.counts.assign(kRankHistogramBuckets, 0);
  for (const auto& r : report.records) {
    const auto rank = static_cast<double>(r.rank);
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), rank);
    const auto bucket = static_cast<std::size_t>(std::distance(h.edges.begin(), it)) - 1;
    ++h.counts[std::min(bucket, kRankHistogramBuckets - 1)];
  }
  return h;
}

inline Json filter_config_to_json(const FilterConfig& cfg) {
  Json j;
  j["rank_threshold"] = cfg.rank_threshold;
  j["distractor_count"] = cfg.distractor_count;
  j["seed"] = cfg.seed;
  j["shared_sample"] = cfg.shared_sample;
  return j;
}

inline Json report_to_json(const FilterReport& report) {
  Json j;
  j["retained"] = report.retained;
  j["total"] = report.total;
  j["retention_rate"] = report.retention_rate;
  j["config"] = filter_config_to_json(report.config);
  j["zero_vector_warnings"] = report.zero_vector_warnings;
  const RankHistogram h = rank_histogram(report);
  j["rank_histogram"]["edges"] = h.edges;
  j["rank_histogram"]["counts"] = h.counts;
  return j;
}

struct ManifestEntry {
  std::string pair_id;
  double self_sim = 0.0;
  std::size_t rank = 0;
};

// One {pair_id, self_sim, rank} object per retained pair, in input order.
inline std::vector<Json> emit_manifest(const FilterReport& report) {
  std::vector<Json> lines;
  for (const auto& r : report.records) {
    if (!r.kept) continue;
    Json j;
    j["pair_id"] = r.pair_id;
    j["self_sim"] = r.self_sim;
    j["rank"] = r.rank;
    lines.push_back(std::move(j));
  }
  return lines;
}

inline void write_manifest(const FilterReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, encode_jsonl(emit_manifest(report)));
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::vector<ManifestEntry> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      out.push_back({j.at("pair_id").get<std::string>(), j.at("self_sim").get<double>(),
                     j.at("rank").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": manifest entry " + std::to_string(line) + ": " +
                        e.what());
    }
  }
  return out;
}

}  // namespace wora
