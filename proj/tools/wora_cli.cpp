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

// wora: command-line front end.
//
// Exit codes: 0 ok, 1 internal error, 2 configuration error, 3 data/format error.

#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "wora/adapters.hpp"
#include "wora/config.hpp"
#include "wora/embio.hpp"
#include "wora/error.hpp"
#include "wora/filtering.hpp"
#include "wora/gradcheck.hpp"
#include "wora/harness.hpp"
#include "wora/metrics.hpp"

namespace fs = std::filesystem;
using namespace wora;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;

// Flags that mirror config keys. Values are kept as text and applied through
// the config parser after the file, so flags win over the file.
class Overrides {
 public:
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key,
                   const std::string& help) {
    auto& slot = values_.emplace_back(key, std::string{});
    auto* opt = app->add_option(flag, slot.second, help);
    options_.push_back(opt);
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& flag, const std::string& key,
                        const std::string& value, const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    flags_.emplace_back(opt, std::make_pair(key, value));
    return opt;
  }

  void apply(Settings& s) const {
    auto it = values_.begin();
    for (const auto* opt : options_) {
      if (opt->count() > 0) apply_setting(s, it->first, it->second);
      ++it;
    }
    for (const auto& [opt, kv] : flags_) {
      if (opt->count() > 0) apply_setting(s, kv.first, kv.second);
    }
  }

 private:
  // std::deque keeps slot addresses stable for CLI11's bound references.
  std::deque<std::pair<std::string, std::string>> values_;
  std::vector<CLI::Option*> options_;
  std::vector<std::pair<CLI::Option*, std::pair<std::string, std::string>>> flags_;
};

struct Common {
  std::string config_path;
  Overrides overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    overrides.add(app, "--seed", "seed", "random seed");
    overrides.add(app, "--threads", "threads", "worker threads (0 = auto)");
  }

  Settings resolve() const {
    Settings s = config_path.empty() ? Settings{} : load_config(config_path);
    overrides.apply(s);
    return s;
  }
};

std::pair<std::size_t, std::size_t> parse_dims(const std::string& text) {
  const auto x = text.find('x');
  std::size_t a = 0, b = 0;
  if (x != std::string::npos) {
    try {
      std::size_t used_a = 0, used_b = 0;
      a = std::stoul(text.substr(0, x), &used_a);
      b = std::stoul(text.substr(x + 1), &used_b);
      if (used_a == x && used_b == text.size() - x - 1 && a > 0 && b > 0) return {a, b};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("--dims expects AxB with positive integers, got '" + text + "'");
}

std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * rate);
  return buf;
}

void emit_json(const Json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, out);
  }
}

// ---------------------------------------------------------------- filter

struct FilterArgs {
  Common common;
  std::string images, texts, distractors;
  std::string manifest = "manifest.jsonl";
  std::string report = "report.json";
};

int cmd_filter(const FilterArgs& a) {
  const Settings s = a.common.resolve();
  PairedDataset data;
  data.images = read_embeddings(a.images);
  data.texts = read_embeddings(a.texts);
  data.pair_ids = data.images.ids;
  validate(data);
  DistractorPool pool{read_embeddings(a.distractors), a.distractors};
  if (pool.embeddings.dim() != data.dim()) {
    throw ShapeError("distractor dim " + std::to_string(pool.embeddings.dim()) +
                     " != pair dim " + std::to_string(data.dim()));
  }
  const FilterReport report = filter_dataset(data, pool, s.filter_config(), resolve_threads(s.threads));
  write_manifest(report, a.manifest);
  write_json(report_to_json(report), a.report);
  if (report.zero_vector_warnings > 0) {
    std::cerr << "warning: " << report.zero_vector_warnings
              << " zero-norm embedding rows (cosine treated as 0)\n";
  }
  std::cout << "retained " << report.retained << '/' << report.total << " ("
            << percent(report.retention_rate) << "%)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  Common common;
  std::string dims;
  std::size_t rank = 0;
  std::size_t instances = 20;
  double tol = 1e-6;
  std::string kind = "wora";
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const Settings s = a.common.resolve();
  GradCheckSuiteOptions opts;
  opts.instances = a.instances;
  opts.rank = a.rank;
  opts.seed = s.seed;
  opts.tol = a.tol;
  try {
    opts.kind = parse_adapter_kind(a.kind);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!a.dims.empty()) std::tie(opts.d_in, opts.d_out) = parse_dims(a.dims);
  if (opts.instances < 1) throw ConfigError("--instances must be >= 1");
  if (!(opts.tol >= 0.0)) throw ConfigError("--tol must be >= 0");
  if (opts.d_in && opts.rank) check_rank(opts.rank, opts.d_in, opts.d_out);

  const auto result = run_gradcheck_suite(opts);
  std::vector<std::string> failing;
  for (const auto& f : result.per_parameter) {
    std::printf("%-5s max_rel_error %.3e  (%zu entries, %zu near zero, max %.3e)  %s\n",
                f.name.c_str(), f.max_rel_error, f.entries, f.small_entries,
                f.max_rel_error_small, f.passed ? "ok" : "FAIL");
    if (!f.passed) failing.push_back(f.name);
  }
  std::printf("%zu instances, tol %.1e: %s\n", result.reports.size(), opts.tol,
              result.passed ? "passed" : "FAILED");
  if (!failing.empty()) {
    std::cerr << "gradcheck: tolerance exceeded for";
    for (const auto& n : failing) std::cerr << ' ' << n;
    std::cerr << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- init-adapter / merge

struct InitArgs {
  Common common;
  std::string w0, out;
};

int cmd_init_adapter(const InitArgs& a) {
  const Settings s = a.common.resolve();
  const EmbeddingMatrix w0 = read_embeddings(a.w0);
  const AdapterState state = init_adapter(w0.matrix, s.rank, s.kind, s.seed, s.adapter_options());
  write_checkpoint(state, a.out);
  const auto pc = count_params(state);
  std::cout << to_string(state.kind) << " rank " << state.rank << " on " << w0.matrix.shape()
            << ": " << pc.trainable << " trainable parameters\n";
  return kExitOk;
}

struct MergeArgs {
  std::string checkpoint, out;
};

int cmd_merge(const MergeArgs& a) {
  const AdapterState state = read_checkpoint(a.checkpoint);
  const Matrix merged = merge_and_freeze(state);
  write_embeddings(merged, a.out);
  std::cout << "merged " << to_string(state.kind) << " rank " << state.rank << " into "
            << merged.shape() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string queries, gallery, out;
};

int cmd_eval(const EvalArgs& a) {
  const Settings s = a.common.resolve();
  const EmbeddingMatrix q = read_embeddings(a.queries);
  const EmbeddingMatrix g = read_embeddings(a.gallery);
  const Relevance rel = relevance_by_id(q.ids, g.ids);
  const auto rankings = build_rankings(q, g, rel, s.k_candidates, resolve_threads(s.threads));
  emit_json(eval_to_json(evaluate(rankings)), a.out);
  return kExitOk;
}

// ---------------------------------------------------------------- param-count

struct ParamArgs {
  Common common;
  std::string dims;
  bool json = false;
};

int cmd_param_count(const ParamArgs& a) {
  const Settings s = a.common.resolve();
  const auto [d_in, d_out] = parse_dims(a.dims);
  check_rank(s.rank, d_in, d_out);
  const ParamCount pc = count_params(s.kind, d_in, d_out, s.rank);
  if (a.json) {
    Json j;
    j["kind"] = to_string(s.kind);
    j["d_in"] = d_in;
    j["d_out"] = d_out;
    j["rank"] = s.rank;
    j["trainable"] = pc.trainable;
    j["frozen"] = pc.frozen;
    j["total"] = pc.total;
    for (const auto& [k, v] : pc.breakdown) j["breakdown"][k] = v;
    std::cout << j.dump(2) << '\n';
    return kExitOk;
  }
  std::cout << "trainable " << pc.trainable << '\n'
            << "frozen " << pc.frozen << '\n'
            << "total " << pc.total << '\n';
  for (const auto& [k, v] : pc.breakdown) std::cout << "  " << k << ' ' << v << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- toy harness

struct ToyArgs {
  Common common;
  std::string method = "wora";
  std::string out;
};

int cmd_train_toy(const ToyArgs& a) {
  const Settings s = a.common.resolve();
  const Method method = parse_method(a.method);
  const SyntheticSpec spec = s.synthetic_spec();
  validate(spec);
  const HarnessConfig cfg = s.harness_config();
  const SyntheticData data = generate_synthetic(spec);
  const PairedDataset train = prepare_training_set(data, cfg, resolve_threads(s.threads));
  const HarnessResult r = run_experiment(method, s.rank, train, spec, cfg);
  Json j = result_to_json(r);
  j["seed"] = s.seed;
  j["corrupt_fraction"] = spec.corrupt_fraction;
  j["filtered"] = cfg.use_filter;
  emit_json(j, a.out);
  if (!a.out.empty()) {
    std::printf("%s rank %zu: R@1 %.4f  mAP %.4f  (%zu train pairs, %.2fs)\n",
                std::string(to_string(r.method)).c_str(), r.rank, r.recall.at(1), r.map_score,
                r.train_pairs, r.wall_time_s);
  }
  return kExitOk;
}

struct SweepArgs {
  Common common;
  std::string method = "wora";
  std::vector<std::size_t> ranks = {4, 8, 16, 32, 64};
  std::string out = "rank_sweep.json";
  std::string csv = "rank_sweep.csv";
};

int cmd_rank_sweep(const SweepArgs& a) {
  const Settings s = a.common.resolve();
  const Method method = parse_method(a.method);
  const SyntheticSpec spec = s.synthetic_spec();
  validate(spec);
  const HarnessConfig cfg = s.harness_config();
  const SyntheticData data = generate_synthetic(spec);
  const std::size_t threads = resolve_threads(s.threads);
  const PairedDataset train = prepare_training_set(data, cfg, threads);
  const auto results = rank_sweep(method, a.ranks, train, spec, cfg, threads);

  double lo = 1.0, hi = 0.0;
  Json table = Json::array();
  for (const auto& r : results) {
    lo = std::min(lo, r.recall.at(1));
    hi = std::max(hi, r.recall.at(1));
    table.push_back(result_to_json(r));
  }
  Json j;
  j["method"] = to_string(method);
  j["seed"] = s.seed;
  j["results"] = std::move(table);
  j["r1_spread"] = hi - lo;
  write_json(j, a.out);
  write_file_atomic(a.csv, sweep_to_csv(results));
  for (const auto& r : results) {
    std::printf("rank %3zu  params %7zu  R@1 %.4f  mAP %.4f\n", r.rank, r.trainable_params,
                r.recall.at(1), r.map_score);
  }
  std::printf("R@1 spread %.2f points\n", 100.0 * (hi - lo));
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common common;
  std::string out_dir = ".";
};

int cmd_synth(const SynthArgs& a) {
  const Settings s = a.common.resolve();
  const SyntheticSpec spec = s.synthetic_spec();
  validate(spec);
  const SyntheticData data = generate_synthetic(spec);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_embeddings(data.dataset.images, dir / "images.emb");
  write_embeddings(data.dataset.texts, dir / "texts.emb");
  write_embeddings(data.pool.embeddings, dir / "distractors.emb");
  std::vector<Json> labels;
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    Json j;
    j["pair_id"] = data.dataset.pair_ids[i];
    j["corrupted"] = static_cast<bool>(data.corrupted[i]);
    labels.push_back(std::move(j));
  }
  write_file_atomic(dir / "planted.jsonl", encode_jsonl(labels));
  std::cout << "wrote " << data.dataset.size() << " pairs and " << data.pool.size()
            << " distractors to " << dir.string() << '\n';
  return kExitOk;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wora: weight-decomposed low-rank adapters, data filtering and retrieval metrics"};
  app.require_subcommand(1);

  FilterArgs filter;
  auto* f = app.add_subcommand("filter", "rank-filter image-text pairs against a distractor pool");
  filter.common.attach(f);
  f->add_option("--images", filter.images, "image embeddings (EMB1)")->required();
  f->add_option("--texts", filter.texts, "text embeddings (EMB1)")->required();
  f->add_option("--distractors", filter.distractors, "distractor text embeddings (EMB1)")->required();
  f->add_option("--manifest", filter.manifest, "retained-pair manifest (JSONL)");
  f->add_option("--report", filter.report, "filter report (JSON)");
  filter.common.overrides.add(f, "--rank-threshold", "rank_threshold", "keep pairs with rank <= N");
  filter.common.overrides.add(f, "--distractor-count", "distractor_count", "distractors per pair");
  filter.common.overrides.add_flag(f, "--per-pair-sampling", "shared_sample", "false",
                                   "draw a fresh distractor sample for every pair");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "check adapter gradients against finite differences");
  gc.common.attach(g);
  g->add_option("--dims", gc.dims, "AxB (default: random up to 16x16)");
  g->add_option("--rank", gc.rank, "adapter rank (default: random up to 4)");
  g->add_option("--instances", gc.instances, "number of random instances");
  g->add_option("--tol", gc.tol, "relative error tolerance");
  g->add_option("--kind", gc.kind, "lora|dora|wora");

  InitArgs init;
  auto* ia = app.add_subcommand("init-adapter", "initialize an adapter checkpoint on a base weight");
  init.common.attach(ia);
  ia->add_option("--w0", init.w0, "base weight (EMB1, d_in x d_out)")->required();
  ia->add_option("--out", init.out, "checkpoint path")->required();
  init.common.overrides.add(ia, "--rank", "rank", "adapter rank");
  init.common.overrides.add(ia, "--kind", "kind", "lora|dora|wora");
  init.common.overrides.add(ia, "--alpha", "alpha", "scale on BA");
  init.common.overrides.add(ia, "--beta", "beta", "scale on W0");

  MergeArgs merge;
  auto* m = app.add_subcommand("merge", "fold an adapter checkpoint into a single weight");
  m->add_option("--checkpoint", merge.checkpoint, "adapter checkpoint")->required();
  m->add_option("--out", merge.out, "merged weight (EMB1)")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Recall@K and mAP of queries against a gallery");
  ev.common.attach(e);
  e->add_option("--queries", ev.queries, "query embeddings (EMB1)")->required();
  e->add_option("--gallery", ev.gallery, "gallery embeddings (EMB1)")->required();
  e->add_option("--out", ev.out, "write JSON here instead of stdout");
  ev.common.overrides.add(e, "--k-candidates", "k_candidates", "ranking depth per query");

  ParamArgs pc;
  auto* p = app.add_subcommand("param-count", "trainable parameter count of an adapter");
  pc.common.attach(p);
  p->add_option("--dims", pc.dims, "AxB")->required();
  p->add_flag("--json", pc.json, "JSON output");
  pc.common.overrides.add(p, "--rank", "rank", "adapter rank");
  pc.common.overrides.add(p, "--kind", "kind", "lora|dora|wora");

  auto add_toy_flags = [](Common& c, CLI::App* app) {
    c.overrides.add(app, "--corrupt-fraction", "corrupt_fraction", "share of mismatched pairs");
    c.overrides.add(app, "--epochs", "epochs", "epoch budget");
    c.overrides.add(app, "--lr", "lr", "SGD learning rate");
    c.overrides.add(app, "--weight-decay", "weight_decay", "weight decay on B and A");
    c.overrides.add(app, "--alpha", "alpha", "adapter alpha");
    c.overrides.add(app, "--beta", "beta", "adapter beta");
    c.overrides.add_flag(app, "--no-filter", "use_filter", "false", "train on all pairs");
  };

  ToyArgs toy;
  auto* t = app.add_subcommand("train-toy", "train one method on the synthetic task");
  toy.common.attach(t);
  t->add_option("--method", toy.method, "frozen|full|lora|dora|wora");
  t->add_option("--out", toy.out, "results JSON (default: stdout)");
  toy.common.overrides.add(t, "--rank", "rank", "adapter rank");
  add_toy_flags(toy.common, t);

  SweepArgs sweep;
  auto* r = app.add_subcommand("rank-sweep", "train one adapter method across ranks");
  sweep.common.attach(r);
  r->add_option("--method", sweep.method, "lora|dora|wora");
  r->add_option("--ranks", sweep.ranks, "ranks to sweep")->delimiter(',');
  r->add_option("--out", sweep.out, "JSON table");
  r->add_option("--csv", sweep.csv, "CSV table");
  add_toy_flags(sweep.common, r);

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "write a synthetic paired dataset with planted noise");
  synth.common.attach(sy);
  sy->add_option("--out-dir", synth.out_dir, "output directory");
  synth.common.overrides.add(sy, "--corrupt-fraction", "corrupt_fraction", "share of mismatched pairs");
  synth.common.overrides.add(sy, "--n-pairs", "n_pairs", "number of pairs");
  synth.common.overrides.add(sy, "--pool-size", "pool_size", "distractor pool size");
  synth.common.overrides.add(sy, "--noise-std", "noise_std", "embedding noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (f->parsed()) return guarded([&] { return cmd_filter(filter); });
  if (g->parsed()) return guarded([&] { return cmd_gradcheck(gc); });
  if (ia->parsed()) return guarded([&] { return cmd_init_adapter(init); });
  if (m->parsed()) return guarded([&] { return cmd_merge(merge); });
  if (e->parsed()) return guarded([&] { return cmd_eval(ev); });
  if (p->parsed()) return guarded([&] { return cmd_param_count(pc); });
  if (t->parsed()) return guarded([&] { return cmd_train_toy(toy); });
  if (r->parsed()) return guarded([&] { return cmd_rank_sweep(sweep); });
  if (sy->parsed()) return guarded([&] { return cmd_synth(synth); });
  return kExitInternal;
}
