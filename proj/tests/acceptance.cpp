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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "wora/adapters.hpp"
#include "wora/embio.hpp"
#include "wora/filtering.hpp"
#include "wora/gradcheck.hpp"
#include "wora/harness.hpp"
#include "wora/metrics.hpp"

using namespace wora;
using wora::testing::argsort_desc;
using wora::testing::max_abs_diff;
using wora::testing::naive_matmul;
using wora::testing::random_matrix;
using wora::testing::random_state;
using wora::testing::ReferenceDora;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_verification() {
  const auto t0 = Clock::now();
  GradCheckSuiteOptions opts;
  opts.instances = 20;
  opts.kind = AdapterKind::WoRA;
  opts.tol = 1e-6;
  opts.seed = 2024;
  const auto suite = run_gradcheck_suite(opts);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string per;
  for (const auto& f : suite.per_parameter) {
    worst = std::max(worst, f.max_rel_error);
    per += fmt(" %s=%.1e", f.name.c_str(), f.max_rel_error);
  }
  return {suite.passed && suite.reports.size() >= 20 && worst < 1e-6 && elapsed < 5.0,
          fmt("%zu instances, max rel err %.2e (tol 1e-6),", suite.reports.size(), worst) + per +
              fmt(", %.2fs (limit 5s)", elapsed)};
}

Outcome reduction_equivalence() {
  Xoshiro256 rng(3001);
  double merge_gap = 0.0, grad_gap = 0.0, lora_gap = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t d_in = 3 + rng.below(10), d_out = 3 + rng.below(10);
    const std::size_t r = 1 + rng.below(std::min(d_in, d_out) - 1);
    AdapterState s = random_state(d_in, d_out, r, AdapterKind::WoRA, rng);
    s.alpha = kDefaultAlpha;
    s.beta = 1.0;
    ReferenceDora ref{s.w0, s.b, s.a, {s.mag.begin(), s.mag.end()}, kDefaultAlpha};
    merge_gap = std::max(merge_gap, max_abs_diff(wora_merge(s), ref.merge()));
    const auto x = random_matrix(4, d_in, rng);
    const auto dy = random_matrix(4, d_out, rng);
    const auto g = adapter_backward(s, x, dy);
    const auto rg = ref.grads(x, dy);
    grad_gap = std::max({grad_gap, max_abs_diff(g.d_b, rg.d_b), max_abs_diff(g.d_a, rg.d_a),
                         max_abs_diff(g.d_mag, RowVector(rg.d_mag))});

    AdapterState lora_form = random_state(d_in, d_out, r, AdapterKind::WoRA, rng);
    lora_form.beta = 1.0;
    const Matrix expect =
        linear_combination(1.0, lora_form.w0, lora_form.alpha, naive_matmul(lora_form.b, lora_form.a));
    lora_form.mag = column_l2_norm(expect, lora_form.epsilon);
    lora_gap = std::max(lora_gap, max_abs_diff(wora_merge(lora_form), expect));
  }
  return {merge_gap <= 1e-12 && grad_gap <= 1e-12 && lora_gap <= 1e-12,
          fmt("50 instances: DoRA merge gap %.1e, gradient gap %.1e, LoRA-form gap %.1e (limit 1e-12)",
              merge_gap, grad_gap, lora_gap)};
}

Outcome merge_forward_equivalence() {
  Xoshiro256 rng(3002);
  double worst = 0.0;
  for (auto kind : {AdapterKind::LoRA, AdapterKind::DoRA, AdapterKind::WoRA}) {
    for (int t = 0; t < 100; ++t) {
      const std::size_t d_in = 2 + rng.below(31), d_out = 2 + rng.below(31);
      const std::size_t r = 1 + rng.below(std::min<std::size_t>(std::min(d_in, d_out) - 1, 8));
      const auto s = random_state(d_in, d_out, r, kind, rng);
      const auto x = random_matrix(1 + rng.below(16), d_in, rng);
      worst = std::max(worst, max_abs_diff(adapter_forward(s, x), naive_matmul(x, merge_and_freeze(s))));
    }
  }
  return {worst <= 1e-10, fmt("3 kinds x 100 pairs, max |factored - merged| %.1e (limit 1e-10)", worst)};
}

Outcome filtering_oracle() {
  Xoshiro256 rng(3003);
  std::size_t datasets = 0, pairs = 0, mismatches = 0, monotone_failures = 0, full_failures = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(1000);
    const std::size_t pool_n = 1 + rng.below(5000);
    const std::size_t dim = 2 + rng.below(15);
    PairedDataset d;
    d.images = {default_ids(n), random_matrix(n, dim, rng)};
    Matrix txt = d.images.matrix;
    const double noise = 2.0 * rng.uniform();
    for (auto& v : txt.values()) v += rng.normal(0.0, noise);
    d.texts = {default_ids(n), std::move(txt)};
    d.pair_ids = d.images.ids;
    const DistractorPool pool{{default_ids(pool_n), random_matrix(pool_n, dim, rng)}, "random"};
    FilterConfig cfg{.rank_threshold = 1 + rng.below(50),
                     .distractor_count = 1 + rng.below(std::min<std::size_t>(pool_n, 1000)),
                     .seed = rng(),
                     .shared_sample = rng.below(2) == 0};
    const auto report = filter_dataset(d, pool, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      // Sort self + sampled distractor sims descending and locate self.
      const auto sample = sample_distractors(pool, cfg, i);
      const double self = cosine_similarity(d.images.matrix.row(i), d.texts.matrix.row(i));
      std::vector<double> all{self};
      for (auto k : sample) all.push_back(cosine_similarity(d.images.matrix.row(i), pool.embeddings.matrix.row(k)));
      std::sort(all.begin(), all.end(), std::greater<>());
      const auto oracle = static_cast<std::size_t>(std::find(all.begin(), all.end(), self) - all.begin()) + 1;
      mismatches += report.records[i].rank != oracle;
      ++pairs;
    }
    std::vector<std::size_t> thresholds{1, 2, 5, 20, cfg.distractor_count / 2 + 1,
                                        cfg.distractor_count};
    std::sort(thresholds.begin(), thresholds.end());
    double last = 0.0;
    for (std::size_t thr : thresholds) {
      auto c = cfg;
      c.rank_threshold = thr;
      const double rate = filter_dataset(d, pool, c).retention_rate;
      monotone_failures += rate < last;
      last = rate;
    }
    auto all_cfg = cfg;
    all_cfg.rank_threshold = cfg.distractor_count + 1;
    full_failures += filter_dataset(d, pool, all_cfg).retention_rate != 1.0;
    ++datasets;
  }
  return {mismatches == 0 && monotone_failures == 0 && full_failures == 0,
          fmt("%zu datasets, %zu pairs: %zu rank mismatches, %zu monotonicity violations, "
              "%zu full-retention failures",
              datasets, pairs, mismatches, monotone_failures, full_failures)};
}

Outcome planted_noise_recovery() {
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.corrupt_fraction = 0.21;
    spec.noise_std = 0.1;
    const auto data = generate_synthetic(spec);
    const FilterConfig cfg{.rank_threshold = 1, .distractor_count = 1000, .seed = seed};
    auto report = filter_dataset(data.dataset, data.pool, cfg);
    // Threshold at the clean-pair count: the rank of the n_clean-th best pair.
    const auto n_clean =
        static_cast<std::size_t>(std::count(data.corrupted.begin(), data.corrupted.end(), false));
    std::vector<std::size_t> ranks;
    for (const auto& r : report.records) ranks.push_back(r.rank);
    std::sort(ranks.begin(), ranks.end());
    const std::size_t threshold = ranks[n_clean - 1];
    std::size_t tp = 0, kept = 0;
    for (std::size_t i = 0; i < report.records.size(); ++i) {
      const bool keep = report.records[i].rank <= threshold;
      kept += keep;
      tp += keep && !data.corrupted[i];
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(kept);
    const double recall = static_cast<double>(tp) / static_cast<double>(n_clean);
    pass = pass && precision >= 0.9 && recall >= 0.9;
    detail += fmt("%sseed %llu: thr %zu P %.3f R %.3f", seed ? "; " : "",
                  static_cast<unsigned long long>(seed), threshold, precision, recall);
  }
  return {pass, detail + " (limit 0.9)"};
}

Outcome metrics_oracle() {
  Xoshiro256 rng(3006);
  std::size_t mismatches = 0, single_failures = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t g = 10 + rng.below(191), nq = 1 + rng.below(30), dim = 2 + rng.below(10);
    const EmbeddingMatrix gallery{default_ids(g), random_matrix(g, dim, rng)};
    const EmbeddingMatrix queries{default_ids(nq), random_matrix(nq, dim, rng)};
    Relevance rel(nq);
    for (auto& r : rel) {
      const std::size_t k = 1 + rng.below(4);
      while (r.size() < k) r.insert(rng.below(g));
    }
    const auto rankings = build_rankings(queries, gallery, rel, g);
    std::vector<std::size_t> first_hit(nq);
    double ap_sum = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      std::vector<double> scores(g);
      for (std::size_t j = 0; j < g; ++j) scores[j] = cosine_similarity(queries.matrix.row(q), gallery.matrix.row(j));
      const auto order = argsort_desc(scores);
      mismatches += order != rankings[q].ranked_gallery;
      double ap = 0.0;
      std::size_t hits = 0;
      for (std::size_t p = 0; p < g; ++p) {
        if (!rel[q].count(order[p])) continue;
        if (hits == 0) first_hit[q] = p + 1;
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(p + 1);
      }
      ap /= static_cast<double>(rel[q].size());
      mismatches += average_precision(rankings[q]) != ap;
      ap_sum += ap;

      RetrievalRanking single = rankings[q];
      single.relevant = {order[q % g]};
      single_failures += average_precision(single) != 1.0 / static_cast<double>(q % g + 1);
    }
    for (std::size_t k : {1, 5, 10}) {
      std::size_t hits = 0;
      for (auto h : first_hit) hits += h <= k;
      mismatches += recall_at_k(rankings, k) != static_cast<double>(hits) / static_cast<double>(nq);
    }
    double map_oracle = 0.0;
    for (const auto& r : rankings) map_oracle += average_precision(r);
    mismatches += mean_average_precision(rankings) != map_oracle / static_cast<double>(nq);
    mismatches += std::abs(map_oracle - ap_sum) > 0.0;
  }
  return {mismatches == 0 && single_failures == 0,
          fmt("100 galleries: %zu oracle mismatches, %zu single-relevant AP failures", mismatches,
              single_failures)};
}

Outcome parameter_accounting() {
  Xoshiro256 rng(3007);
  std::size_t failures = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 2 + rng.below(4096), n = 2 + rng.below(4096);
    const std::size_t r = 1 + rng.below(std::min<std::size_t>(std::min(m, n) - 1, 64));
    const auto lora = count_params(AdapterKind::LoRA, m, n, r);
    const auto dora = count_params(AdapterKind::DoRA, m, n, r);
    const auto wora = count_params(AdapterKind::WoRA, m, n, r);
    failures += lora.trainable != r * (m + n);
    failures += dora.trainable != r * (m + n) + n;
    failures += wora.trainable != r * (m + n) + n + 2;
    failures += wora.trainable - dora.trainable != 2;
  }
  const auto big = count_params(AdapterKind::WoRA, 1024, 1024, 8).trainable;
  return {failures == 0 && big == 17410,
          fmt("20 shapes: %zu formula failures; 1024x1024 r8 WoRA = %zu", failures, big)};
}

Outcome loss_aggregation() {
  const double v = total_loss({1, 1, 1, 1, 1, 1, 0.8});
  return {std::abs(v - 3.8) <= 1e-12, fmt("total_loss(all 1, eta 0.8) = %.15f", v)};
}

struct SeedRuns {
  double frozen, lora, dora, wora, wora_unfiltered;
};

Outcome toy_end_to_end() {
  const auto t0 = Clock::now();
  std::vector<SeedRuns> runs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    HarnessConfig cfg;
    cfg.seed = seed;
    cfg.filter.seed = seed;
    const auto data = generate_synthetic(spec);
    const auto train = prepare_training_set(data, cfg);
    auto unfiltered_cfg = cfg;
    unfiltered_cfg.use_filter = false;
    const auto all = prepare_training_set(data, unfiltered_cfg);
    auto r1 = [&](Method m, const PairedDataset& d, const HarnessConfig& c) {
      return run_experiment(m, 8, d, spec, c).recall.at(1);
    };
    runs.push_back({r1(Method::Frozen, train, cfg), r1(Method::LoRA, train, cfg),
                    r1(Method::DoRA, train, cfg), r1(Method::WoRA, train, cfg),
                    r1(Method::WoRA, all, unfiltered_cfg)});
  }
  const double elapsed = seconds_since(t0);
  bool beats_frozen = true;
  std::size_t wora_ge_lora = 0, filtered_ge = 0;
  std::string detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    beats_frozen = beats_frozen && r.lora > r.frozen && r.dora > r.frozen && r.wora > r.frozen;
    wora_ge_lora += r.wora >= r.lora;
    filtered_ge += r.wora >= r.wora_unfiltered;
    detail += fmt("%sR@1 s%zu frozen %.3f lora %.3f dora %.3f wora %.3f unfiltered %.3f",
                  i ? "; " : "", i, r.frozen, r.lora, r.dora, r.wora, r.wora_unfiltered);
  }
  const bool pass = beats_frozen && wora_ge_lora >= 3 && filtered_ge >= 3 && elapsed < 120.0;
  return {pass, fmt("(a) all adapters beat frozen: %s, (b) wora>=lora on %zu/5, (c) filtered>=unfiltered on %zu/5, %.1fs (limit 120s) | ",
                    beats_frozen ? "yes" : "no", wora_ge_lora, filtered_ge, elapsed) +
                    detail};
}

Outcome rank_sweep_stability() {
  const SyntheticSpec spec;
  const HarnessConfig cfg;
  const auto data = generate_synthetic(spec);
  const auto train = prepare_training_set(data, cfg);
  const auto results = rank_sweep(Method::WoRA, {4, 8, 16, 32, 64}, train, spec, cfg);
  double lo = 1.0, hi = 0.0;
  std::string detail;
  for (const auto& r : results) {
    lo = std::min(lo, r.recall.at(1));
    hi = std::max(hi, r.recall.at(1));
    detail += fmt(" r%zu=%.3f", r.rank, r.recall.at(1));
  }
  const double spread = 100.0 * (hi - lo);
  return {spread <= 5.0, fmt("R@1 spread %.2f points (limit 5):", spread) + detail};
}

Outcome format_fuzzing() {
  Xoshiro256 rng(3011);
  Matrix m = random_matrix(3, 4, rng);
  for (auto& v : m.values()) v = static_cast<float>(v);
  const std::string good = encode_emb1(m);
  auto parse = [](const std::string& bytes) {
    std::istringstream in(bytes);
    return read_emb1_section(in, bytes.size(), "fuzz", true);
  };
  const bool round_trip = parse(good) == m;
  std::size_t tried = 0, rejected = 0;
  for (std::size_t pos = 0; pos < kEmbHeaderSize; ++pos) {
    for (int v = 0; v < 256; ++v) {
      if (static_cast<unsigned char>(good[pos]) == v) continue;
      std::string bad = good;
      bad[pos] = static_cast<char>(v);
      ++tried;
      try {
        parse(bad);
      } catch (const FormatError&) {
        ++rejected;
      }
    }
  }
  bool bomb_rejected = false;
  std::string bomb = good.substr(0, 8);
  for (int i = 0; i < 16; ++i) bomb += static_cast<char>(0x7F);
  bomb += std::string(64, '\0');
  try {
    parse(bomb);
  } catch (const LengthError&) {
    bomb_rejected = true;
  }
  return {round_trip && rejected == tried && bomb_rejected,
          fmt("%zu/%zu header corruptions rejected, round trip %s, size bomb %s", rejected, tried,
              round_trip ? "exact" : "MISMATCH", bomb_rejected ? "rejected" : "ACCEPTED")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient verification", gradient_verification},
      {"reduction equivalence", reduction_equivalence},
      {"merge/forward equivalence", merge_forward_equivalence},
      {"filtering oracle equivalence", filtering_oracle},
      {"planted-noise recovery", planted_noise_recovery},
      {"metrics oracle", metrics_oracle},
      {"parameter accounting", parameter_accounting},
      {"loss aggregation", loss_aggregation},
      {"toy end-to-end", toy_end_to_end},
      {"rank-sweep stability", rank_sweep_stability},
      {"format fuzzing", format_fuzzing},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
              criteria.size());
  return failed == 0 ? 0 : 1;
}
