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

// Desk-scale end-to-end harness.
//
// A latent z in R^dim_latent is embedded into R^dim_embed through a shared
// orthonormal generator Q, for images and texts alike, plus Gaussian noise.
// A fraction of pairs is corrupted by drawing the text from an unrelated
// latent. The model is a single linear projection of the image embedding,
// scored against the raw text embedding by cosine similarity.
//
// The base weight W0 is ridge-fitted on a "pretraining" split whose images
// come from a latent rotated in a few planes, so on the downstream split W0
// is off by a low-rank correction that the adapters have to learn.

#pragma once

#include <chrono>
#include <map>
#include <numeric>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wora/adapters.hpp"
#include "wora/embio.hpp"
#include "wora/error.hpp"
#include "wora/filtering.hpp"
#include "wora/linalg.hpp"
#include "wora/metrics.hpp"
#include "wora/parallel.hpp"
#include "wora/rng.hpp"

namespace wora {

struct SyntheticSpec {
  std::size_t n_pairs = 2000;
  std::size_t dim_latent = 16;
  std::size_t dim_embed = 96;
  double noise_std = 0.1;
  double corrupt_fraction = 0.21;
  std::size_t pool_size = 2000;
  std::uint64_t seed = 0;
};

inline void validate(const SyntheticSpec& s) {
  if (!(s.corrupt_fraction >= 0.0 && s.corrupt_fraction <= 1.0)) {
    throw ConfigError("corrupt_fraction must lie in [0, 1]");
  }
  if (s.n_pairs < 1) throw ConfigError("n_pairs must be >= 1");
  if (s.dim_latent < 1 || s.dim_latent > s.dim_embed) {
    throw ConfigError("need 1 <= dim_latent <= dim_embed");
  }
  if (!(s.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
}

struct SyntheticData {
  PairedDataset dataset;
  DistractorPool pool;
  std::vector<bool> corrupted;  // planted labels, one per pair
};

// Generator shared by every split drawn from one spec.
class SyntheticWorld {
 public:
  explicit SyntheticWorld(const SyntheticSpec& spec) : spec_(spec) {
    validate(spec);
    Xoshiro256 rng(derive_seed(spec.seed, 1));
    // Modified Gram-Schmidt on a Gaussian matrix gives orthonormal columns.
    generator_ = Matrix(spec.dim_embed, spec.dim_latent);
    for (auto& v : generator_.values()) v = rng.normal();
    for (std::size_t c = 0; c < spec.dim_latent; ++c) {
      for (std::size_t p = 0; p < c; ++p) {
        double proj = 0.0;
        for (std::size_t r = 0; r < spec.dim_embed; ++r) proj += generator_(r, c) * generator_(r, p);
        for (std::size_t r = 0; r < spec.dim_embed; ++r) generator_(r, c) -= proj * generator_(r, p);
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < spec.dim_embed; ++r) norm += generator_(r, c) * generator_(r, c);
      norm = std::sqrt(norm);
      for (std::size_t r = 0; r < spec.dim_embed; ++r) generator_(r, c) /= norm;
    }
  }

  const SyntheticSpec& spec() const noexcept { return spec_; }
  const Matrix& generator() const noexcept { return generator_; }

  std::vector<double> latent(Xoshiro256& rng) const {
    std::vector<double> z(spec_.dim_latent);
    for (auto& v : z) v = rng.normal();
    return z;
  }

  // Q·z + noise, written into `out`.
  void embed(std::span<const double> z, Xoshiro256& rng, std::span<double> out) const {
    for (std::size_t r = 0; r < spec_.dim_embed; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < spec_.dim_latent; ++c) acc += generator_(r, c) * z[c];
      out[r] = acc;
    }
    if (spec_.noise_std > 0.0) {
      for (auto& v : out) v += rng.normal(0.0, spec_.noise_std);
    }
  }

 private:
  SyntheticSpec spec_;
  Matrix generator_;
};

namespace detail {

inline std::string padded_id(std::string_view prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return std::string(prefix) + digits;
}

// Rotates consecutive latent planes (0,1), (2,3), ... by `angle`.
inline void rotate_planes(std::vector<double>& z, std::size_t planes, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t p = 0; p < planes && 2 * p + 1 < z.size(); ++p) {
    const double a = z[2 * p], b = z[2 * p + 1];
    z[2 * p] = c * a - s * b;
    z[2 * p + 1] = s * a + c * b;
  }
}

}  // namespace detail

// Clean pairs with images drawn from an optionally rotated latent.
inline PairedDataset sample_clean_pairs(const SyntheticWorld& world, std::size_t n,
                                        std::uint64_t stream_seed, std::string_view prefix,
                                        std::size_t rotated_planes = 0, double angle = 0.0) {
  const std::size_t dim = world.spec().dim_embed;
  Xoshiro256 rng(stream_seed);
  PairedDataset d;
  d.images.matrix = Matrix(n, dim);
  d.texts.matrix = Matrix(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z = world.latent(rng);
    world.embed(z, rng, d.texts.matrix.row(i));
    detail::rotate_planes(z, rotated_planes, angle);
    world.embed(z, rng, d.images.matrix.row(i));
    d.pair_ids.push_back(detail::padded_id(prefix, i));
  }
  d.images.ids = d.pair_ids;
  d.texts.ids = d.pair_ids;
  return d;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  const SyntheticWorld world(spec);
  const std::size_t n = spec.n_pairs;
  SyntheticData out;
  out.corrupted.assign(n, false);
  {
    Xoshiro256 pick(derive_seed(spec.seed, 4));
    const auto n_corrupt =
        static_cast<std::size_t>(std::llround(spec.corrupt_fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_corrupt; ++i) {
      std::swap(idx[i], idx[i + static_cast<std::size_t>(pick.below(n - i))]);
      out.corrupted[idx[i]] = true;
    }
  }
  Xoshiro256 rng(derive_seed(spec.seed, 2));
  auto& d = out.dataset;
  d.images.matrix = Matrix(n, spec.dim_embed);
  d.texts.matrix = Matrix(n, spec.dim_embed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> z = world.latent(rng);
    world.embed(z, rng, d.images.matrix.row(i));
    const std::vector<double> text_z = out.corrupted[i] ? world.latent(rng) : z;
    world.embed(text_z, rng, d.texts.matrix.row(i));
    d.pair_ids.push_back(detail::padded_id("pair-", i));
  }
  d.images.ids = d.pair_ids;
  d.texts.ids = d.pair_ids;

  Xoshiro256 pool_rng(derive_seed(spec.seed, 3));
  out.pool.source_tag = "synthetic";
  out.pool.embeddings.matrix = Matrix(spec.pool_size, spec.dim_embed);
  for (std::size_t i = 0; i < spec.pool_size; ++i) {
    world.embed(world.latent(pool_rng), pool_rng, out.pool.embeddings.matrix.row(i));
    out.pool.embeddings.ids.push_back(detail::padded_id("distractor-", i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

struct ItcResult {
  double loss = 0.0;
  Matrix d_img;
  Matrix d_txt;
};

// Symmetric in-batch contrastive loss over cosine logits / temperature: the
// mean of image->text and text->image cross-entropy with matching rows as
// targets.
inline ItcResult itc_loss(const Matrix& img, const Matrix& txt, double temperature) {
  if (img.rows() != txt.rows() || img.cols() != txt.cols()) {
    throw ShapeError("itc_loss: image batch " + img.shape() + " vs text batch " + txt.shape());
  }
  if (img.rows() < 2) throw ConfigError("itc_loss: batch must hold at least 2 pairs");
  if (!(temperature > 0.0)) throw ConfigError("itc_loss: temperature must be > 0");
  const std::size_t n = img.rows(), dim = img.cols();

  auto unit_rows = [&](const Matrix& m, std::vector<double>& norms) {
    Matrix u = m;
    norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = u.row(i);
      norms[i] = std::max(std::sqrt(dot(r, r)), kDefaultEpsilon);
      for (auto& v : r) v /= norms[i];
    }
    return u;
  };
  std::vector<double> img_norm, txt_norm;
  const Matrix ui = unit_rows(img, img_norm);
  const Matrix ut = unit_rows(txt, txt_norm);
  Matrix logits = matmul_nt(ui, ut);
  for (auto& v : logits.values()) v /= temperature;

  // Row-wise (image->text) and column-wise (text->image) softmax.
  Matrix p_row(n, n), p_col(n, n);
  double loss_i2t = 0.0, loss_t2i = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = logits.row(i);
    const double mx = *std::max_element(li.begin(), li.end());
    auto pi = p_row.row(i);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += pi[j] = std::exp(li[j] - mx);
    for (auto& v : pi) v /= z;
    loss_i2t += mx + std::log(z) - li[i];
  }
  std::vector<double> col_max(n, -std::numeric_limits<double>::infinity()), col_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) col_max[j] = std::max(col_max[j], logits(i, j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) col_sum[j] += p_col(i, j) = std::exp(logits(i, j) - col_max[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p_col(i, j) /= col_sum[j];
  for (std::size_t j = 0; j < n; ++j) loss_t2i += col_max[j] + std::log(col_sum[j]) - logits(j, j);
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix d_logits(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      d_logits(i, j) = 0.5 * inv_n * ((p_row(i, j) - target) + (p_col(i, j) - target)) / temperature;
    }
  }
  const Matrix d_ui = matmul(d_logits, ut);     // n x dim
  const Matrix d_ut = matmul_tn(d_logits, ui);  // n x dim

  auto through_norm = [&](const Matrix& du, const Matrix& u, const std::vector<double>& norms,
                          const Matrix& raw) {
    Matrix d(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = raw.row(i);
      const bool floored = !(std::sqrt(dot(r, r)) > kDefaultEpsilon);
      const double proj = floored ? 0.0 : dot(du.row(i), u.row(i));
      for (std::size_t k = 0; k < dim; ++k) d(i, k) = (du(i, k) - proj * u(i, k)) / norms[i];
    }
    return d;
  };

  ItcResult out;
  out.loss = 0.5 * (loss_i2t + loss_t2i) * inv_n;
  out.d_img = through_norm(d_ui, ui, img_norm, img);
  out.d_txt = through_norm(d_ut, ut, txt_norm, txt);
  return out;
}

struct LossTerms {
  double itc = 0.0;
  double itm = 0.0;
  double mlm = 0.0;
  double iac = 0.0;
  double iam = 0.0;
  double mam = 0.0;
  double eta = 0.8;
};

// itc + itm + mlm + eta · (iac + iam + mam) / 3
inline double total_loss(const LossTerms& t) {
  const double attribute = (t.iac + t.iam + t.mam) / 3.0;
  return t.itc + t.itm + t.mlm + t.eta * attribute;
}

// ---------------------------------------------------------------------------
// Experiments

enum class Method { Frozen, FullFT, LoRA, DoRA, WoRA };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Frozen: return "frozen";
    case Method::FullFT: return "full";
    case Method::LoRA: return "lora";
    case Method::DoRA: return "dora";
    case Method::WoRA: return "wora";
  }
  return "unknown";
}

inline Method parse_method(std::string_view name) {
  if (name == "frozen") return Method::Frozen;
  if (name == "full") return Method::FullFT;
  if (name == "lora") return Method::LoRA;
  if (name == "dora") return Method::DoRA;
  if (name == "wora") return Method::WoRA;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected frozen|full|lora|dora|wora)");
}

inline std::optional<AdapterKind> adapter_kind_of(Method m) {
  switch (m) {
    case Method::LoRA: return AdapterKind::LoRA;
    case Method::DoRA: return AdapterKind::DoRA;
    case Method::WoRA: return AdapterKind::WoRA;
    default: return std::nullopt;
  }
}

struct HarnessConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 128;
  double lr = 0.05;
  double weight_decay = 0.0;
  double temperature = 0.07;
  double eta = 0.8;
  std::optional<double> alpha;  // adapter default when unset
  double beta = kDefaultBeta;
  std::uint64_t seed = 0;

  std::size_t eval_pairs = 1000;
  std::size_t pretrain_pairs = 2000;
  std::size_t shift_planes = 1;
  double shift_angle = std::numbers::pi / 2.0;
  double ridge = 1.0;
  std::size_t k_candidates = kDefaultCandidates;

  bool use_filter = true;
  FilterConfig filter{.rank_threshold = 10, .distractor_count = 1000, .seed = 0, .shared_sample = true};
};

struct HarnessResult {
  Method method = Method::Frozen;
  std::size_t rank = 0;
  std::size_t trainable_params = 0;
  std::map<std::size_t, double> recall;
  double map_score = 0.0;
  double wall_time_s = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double weight_delta = 0.0;  // ‖W_final - W0‖_F
  std::size_t train_pairs = 0;
  std::size_t steps = 0;
};

namespace detail {

// Solves (XᵀX + ridge·I) W = XᵀY by Cholesky.
inline Matrix ridge_fit(const Matrix& x, const Matrix& y, double ridge) {
  Matrix g = matmul_tn(x, x);
  const std::size_t d = g.rows();
  for (std::size_t i = 0; i < d; ++i) g(i, i) += ridge;
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = g(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw NumericError("ridge_fit: system is not positive definite");
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = g(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  Matrix w = matmul_tn(x, y);
  for (std::size_t c = 0; c < w.cols(); ++c) {
    for (std::size_t i = 0; i < d; ++i) {
      double v = w(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * w(k, c);
      w(i, c) = v / l(i, i);
    }
    for (std::size_t i = d; i-- > 0;) {
      double v = w(i, c);
      for (std::size_t k = i + 1; k < d; ++k) v -= l(k, i) * w(k, c);
      w(i, c) = v / l(i, i);
    }
  }
  return w;
}

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

inline Matrix head_rows(const Matrix& m, std::size_t n) {
  n = std::min(n, m.rows());
  return Matrix(n, m.cols(), std::vector<double>(m.values().begin(),
                                                 m.values().begin() + static_cast<std::ptrdiff_t>(n * m.cols())));
}

}  // namespace detail

// Base projection fitted on the shifted pretraining split.
inline Matrix pretrain_base_weight(const SyntheticSpec& spec, const HarnessConfig& cfg) {
  const SyntheticWorld world(spec);
  const PairedDataset pre = sample_clean_pairs(world, cfg.pretrain_pairs, derive_seed(spec.seed, 6),
                                               "pre-", cfg.shift_planes, cfg.shift_angle);
  return detail::ridge_fit(pre.images.matrix, pre.texts.matrix, cfg.ridge);
}

// Held-out clean query/gallery split.
inline PairedDataset evaluation_split(const SyntheticSpec& spec, const HarnessConfig& cfg) {
  const SyntheticWorld world(spec);
  return sample_clean_pairs(world, cfg.eval_pairs, derive_seed(spec.seed, 5), "eval-");
}

// Training pairs: the filtered subset when cfg.use_filter, else everything.
inline PairedDataset prepare_training_set(const SyntheticData& data, const HarnessConfig& cfg,
                                          std::size_t threads = 1) {
  if (!cfg.use_filter) return data.dataset;
  const FilterReport report = filter_dataset(data.dataset, data.pool, cfg.filter, threads);
  return select_pairs(data.dataset, kept_mask(report));
}

// Text queries against projected image gallery; pair i matches gallery row i.
inline EvalSummary evaluate_projection(const Matrix& w, const PairedDataset& eval,
                                       std::size_t k_candidates) {
  EmbeddingMatrix gallery{eval.pair_ids, matmul(eval.images.matrix, w)};
  Relevance rel(eval.size());
  for (std::size_t i = 0; i < rel.size(); ++i) rel[i].insert(i);
  const auto rankings = build_rankings(eval.texts, gallery, rel, k_candidates);
  return evaluate(rankings, {1, 5, 10});
}

// Trains the projection for a fixed step budget of
// epochs · ceil(spec.n_pairs / batch_size) SGD steps, independent of how many
// pairs survived filtering, then evaluates on the held-out split.
inline HarnessResult run_experiment(Method method, std::size_t rank, const PairedDataset& train,
                                    const SyntheticSpec& spec, const HarnessConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  validate(train);
  if (train.size() < 2) throw ConfigError("run_experiment: need at least 2 training pairs");
  if (train.dim() != spec.dim_embed) throw ShapeError("run_experiment: training dim mismatch");
  if (cfg.batch_size < 2) throw ConfigError("run_experiment: batch_size must be >= 2");

  const Matrix w0 = pretrain_base_weight(spec, cfg);
  const PairedDataset eval = evaluation_split(spec, cfg);

  HarnessResult res;
  res.method = method;
  res.rank = adapter_kind_of(method) ? rank : 0;
  res.train_pairs = train.size();

  const Matrix probe_img = detail::head_rows(train.images.matrix, 512);
  const Matrix probe_txt = detail::head_rows(train.texts.matrix, 512);
  auto probe = [&](const Matrix& w) {
    return total_loss({.itc = itc_loss(matmul(probe_img, w), probe_txt, cfg.temperature).loss,
                       .eta = cfg.eta});
  };
  res.initial_loss = probe(w0);

  Matrix full_w = w0;
  std::optional<AdapterState> adapter;
  if (auto kind = adapter_kind_of(method)) {
    AdapterOptions opts;
    opts.alpha = cfg.alpha;
    opts.beta = cfg.beta;
    adapter = init_adapter(w0, rank, *kind, derive_seed(cfg.seed, 11), opts);
    res.trainable_params = count_params(*adapter).trainable;
  } else if (method == Method::FullFT) {
    res.trainable_params = w0.rows() * w0.cols();
  }

  if (method != Method::Frozen) {
    const std::size_t batch = std::min(cfg.batch_size, train.size());
    const std::size_t steps_per_epoch = (spec.n_pairs + cfg.batch_size - 1) / cfg.batch_size;
    res.steps = cfg.epochs * steps_per_epoch;
    Xoshiro256 order_rng(derive_seed(cfg.seed, 12));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    std::vector<std::size_t> rows(batch);
    for (std::size_t step = 0; step < res.steps; ++step) {
      for (auto& r : rows) {
        if (cursor == order.size()) {
          for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.below(i))]);
          }
          cursor = 0;
        }
        r = order[cursor++];
      }
      const Matrix xb = detail::gather_rows(train.images.matrix, rows);
      const Matrix tb = detail::gather_rows(train.texts.matrix, rows);
      const Matrix yb = adapter ? adapter_forward(*adapter, xb) : matmul(xb, full_w);
      const ItcResult itc = itc_loss(yb, tb, cfg.temperature);
      // Only the contrastive term is trained here; the other aggregated terms are zero.
      const double loss = total_loss({.itc = itc.loss, .eta = cfg.eta});
      if (!std::isfinite(loss)) {
        throw RunError("training diverged (non-finite loss) at step " + std::to_string(step), step);
      }
      try {
        if (adapter) {
          const AdapterGradients g = adapter_backward(*adapter, xb, itc.d_img);
          adapter = sgd_step(*adapter, g, cfg.lr, cfg.weight_decay);
        } else {
          const Matrix dw = matmul_tn(xb, itc.d_img);
          auto w = full_w.values();
          auto d = dw.values();
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.lr * (d[i] + cfg.weight_decay * w[i]);
        }
      } catch (const NumericError& e) {
        throw RunError(std::string(e.what()) + " at step " + std::to_string(step), step);
      }
    }
  }

  const Matrix w_final = adapter ? merge_and_freeze(*adapter) : full_w;
  if (!all_finite(w_final.values())) throw RunError("training produced a non-finite weight", res.steps);
  res.final_loss = probe(w_final);
  res.weight_delta = frobenius_norm(linear_combination(1.0, w_final, -1.0, w0));
  const EvalSummary ev = evaluate_projection(w_final, eval, cfg.k_candidates);
  res.recall = ev.recall;
  res.map_score = ev.map;
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

inline Json result_to_json(const HarnessResult& r) {
  Json j;
  j["method"] = to_string(r.method);
  j["rank"] = r.rank;
  j["trainable_params"] = r.trainable_params;
  for (const auto& [k, v] : r.recall) j["recall"][std::to_string(k)] = v;
  j["map"] = r.map_score;
  j["initial_loss"] = r.initial_loss;
  j["final_loss"] = r.final_loss;
  j["weight_delta"] = r.weight_delta;
  j["train_pairs"] = r.train_pairs;
  j["steps"] = r.steps;
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

// Independent runs over `ranks`, optionally in parallel; output order follows
// `ranks`.
inline std::vector<HarnessResult> rank_sweep(Method method, const std::vector<std::size_t>& ranks,
                                             const PairedDataset& train, const SyntheticSpec& spec,
                                             const HarnessConfig& cfg, std::size_t threads = 1) {
  if (!adapter_kind_of(method)) throw ConfigError("rank_sweep needs an adapter method");
  std::vector<HarnessResult> out(ranks.size());
  parallel_for(ranks.size(), threads,
               [&](std::size_t i) { out[i] = run_experiment(method, ranks[i], train, spec, cfg); });
  return out;
}

inline std::string sweep_to_csv(const std::vector<HarnessResult>& results) {
  std::ostringstream os;
  os.precision(17);
  os << "method,rank,trainable_params,r1,r5,r10,map,final_loss\n";
  for (const auto& r : results) {
    os << to_string(r.method) << ',' << r.rank << ',' << r.trainable_params << ','
       << r.recall.at(1) << ',' << r.recall.at(5) << ',' << r.recall.at(10) << ',' << r.map_score
       << ',' << r.final_loss << '\n';
  }
  return os.str();
}

}  // namespace wora
