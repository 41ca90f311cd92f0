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

// LoRA, DoRA and WoRA weight parameterizations of a single linear layer
// y = x · W with W of shape (d_in x d_out).
//
//   LoRA:  W = W0 + alpha · B·A                       (alpha defaults to 8 / rank)
//   DoRA:  W = mag ⊙ V / ‖V‖_col,  V = beta·W0 + alpha·B·A   (alpha, beta pinned)
//   WoRA:  same as DoRA with mag, alpha, beta, B, A all trainable
//
// ‖·‖_col is the per-column L2 norm floored at epsilon, so mag has one entry
// per output column. W0 is always frozen.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "wora/error.hpp"
#include "wora/linalg.hpp"
#include "wora/rng.hpp"

namespace wora {

enum class AdapterKind { LoRA, DoRA, WoRA };

inline std::string_view to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::LoRA: return "lora";
    case AdapterKind::DoRA: return "dora";
    case AdapterKind::WoRA: return "wora";
  }
  return "unknown";
}

inline AdapterKind parse_adapter_kind(std::string_view name) {
  if (name == "lora") return AdapterKind::LoRA;
  if (name == "dora") return AdapterKind::DoRA;
  if (name == "wora") return AdapterKind::WoRA;
  throw ConfigError("unknown adapter kind '" + std::string(name) + "' (expected lora|dora|wora)");
}

inline constexpr double kDefaultAlpha = 8.0;
inline constexpr double kDefaultBeta = 1.0;

// LoRA update scaling, 8 / rank.
inline double lora_scale(std::size_t rank) { return 8.0 / static_cast<double>(rank); }

struct AdapterState {
  Matrix w0;      // d_in x d_out, frozen
  Matrix b;       // d_in x rank
  Matrix a;       // rank x d_out
  RowVector mag;  // d_out
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  std::size_t rank = 0;
  AdapterKind kind = AdapterKind::WoRA;
  double epsilon = kDefaultEpsilon;

  std::size_t d_in() const noexcept { return w0.rows(); }
  std::size_t d_out() const noexcept { return w0.cols(); }
};

struct AdapterGradients {
  Matrix d_b;
  Matrix d_a;
  RowVector d_mag;
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

struct ParamCount {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::size_t total = 0;
  std::map<std::string, std::size_t> breakdown;
};

struct AdapterOptions {
  std::optional<double> alpha;  // default: 8/rank for LoRA, 8 otherwise
  double beta = kDefaultBeta;
  double epsilon = kDefaultEpsilon;
};

inline void check_rank(std::size_t rank, std::size_t d_in, std::size_t d_out) {
  if (rank < 1 || rank >= std::min(d_in, d_out)) {
    throw ConfigError("invalid adapter rank " + std::to_string(rank) + " for weight " +
                      shape_str(d_in, d_out) + " (need 1 <= rank < min(d_in, d_out))");
  }
}

inline void validate(const AdapterState& s) {
  check_rank(s.rank, s.d_in(), s.d_out());
  if (s.b.rows() != s.d_in() || s.b.cols() != s.rank) {
    throw ShapeError("adapter factor B has shape " + s.b.shape() + ", expected " +
                     shape_str(s.d_in(), s.rank));
  }
  if (s.a.rows() != s.rank || s.a.cols() != s.d_out()) {
    throw ShapeError("adapter factor A has shape " + s.a.shape() + ", expected " +
                     shape_str(s.rank, s.d_out()));
  }
  if (s.mag.size() != s.d_out()) {
    throw ShapeError("adapter magnitude has length " + std::to_string(s.mag.size()) +
                     ", expected " + std::to_string(s.d_out()));
  }
  if (!(s.epsilon >= 0.0)) throw ConfigError("adapter epsilon must be >= 0");
  if (!std::isfinite(s.alpha) || !std::isfinite(s.beta)) {
    throw NumericError("adapter alpha/beta must be finite");
  }
}

// beta·W0 + alpha·B·A, the un-normalized direction.
inline Matrix direction_numerator(const AdapterState& s) {
  return linear_combination(s.beta, s.w0, s.alpha, matmul(s.b, s.a));
}

inline AdapterState init_adapter(const Matrix& w0, std::size_t rank, AdapterKind kind,
                                 std::uint64_t seed, const AdapterOptions& opts = {}) {
  check_rank(rank, w0.rows(), w0.cols());
  AdapterState s;
  s.w0 = w0;
  s.rank = rank;
  s.kind = kind;
  s.epsilon = opts.epsilon;
  s.alpha = opts.alpha.value_or(kind == AdapterKind::LoRA ? lora_scale(rank) : kDefaultAlpha);
  // Only WoRA trains beta; the other kinds keep W0 at unit weight.
  s.beta = kind == AdapterKind::WoRA ? opts.beta : kDefaultBeta;
  s.b = Matrix(w0.rows(), rank);
  s.a = Matrix(rank, w0.cols());
  Xoshiro256 rng(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rank));
  for (auto& v : s.a.values()) v = rng.normal(0.0, stddev);
  // B = 0, so the numerator is beta·W0 and the merged weight starts at W0.
  s.mag = column_l2_norm(direction_numerator(s), s.epsilon);
  return s;
}

inline Matrix wora_merge(const AdapterState& s) {
  validate(s);
  if (s.kind == AdapterKind::LoRA) {
    return linear_combination(1.0, s.w0, s.alpha, matmul(s.b, s.a));
  }
  Matrix v = direction_numerator(s);
  const RowVector norms = column_l2_norm(v, s.epsilon);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    auto r = v.row(i);
    for (std::size_t j = 0; j < v.cols(); ++j) r[j] *= s.mag[j] / norms[j];
  }
  return v;
}

// Dense weight for inference; the adapter disappears into W.
inline Matrix merge_and_freeze(const AdapterState& s) { return wora_merge(s); }

// Per-column scale mag[j] / max(‖V[:, j]‖, eps), with the column norms of V
// expanded through Gram products so V itself is never formed.
inline RowVector factored_column_scale(const AdapterState& s) {
  const std::size_t d_out = s.d_out();
  std::vector<double> w0_sq(d_out, 0.0);
  for (std::size_t i = 0; i < s.d_in(); ++i) {
    auto r = s.w0.row(i);
    for (std::size_t j = 0; j < d_out; ++j) w0_sq[j] += r[j] * r[j];
  }
  const Matrix w0t_b = matmul_tn(s.w0, s.b);  // d_out x rank
  const Matrix btb = matmul_tn(s.b, s.b);     // rank x rank
  RowVector scale(d_out);
  for (std::size_t j = 0; j < d_out; ++j) {
    double cross = 0.0;
    double ba_sq = 0.0;
    for (std::size_t k = 0; k < s.rank; ++k) {
      cross += w0t_b(j, k) * s.a(k, j);
      double inner = 0.0;
      for (std::size_t l = 0; l < s.rank; ++l) inner += btb(k, l) * s.a(l, j);
      ba_sq += s.a(k, j) * inner;
    }
    const double sq = s.beta * s.beta * w0_sq[j] + 2.0 * s.alpha * s.beta * cross +
                      s.alpha * s.alpha * ba_sq;
    const double norm = std::max(std::sqrt(std::max(sq, 0.0)), s.epsilon);
    scale[j] = s.mag[j] / norm;
  }
  return scale;
}

// y = x · W evaluated in factored form: x·W0 and (x·B)·A are computed
// separately and combined per column. Agrees with matmul(x, wora_merge(s)).
inline Matrix adapter_forward(const AdapterState& s, const Matrix& x) {
  validate(s);
  if (x.cols() != s.d_in()) {
    throw ShapeError("adapter_forward: input " + x.shape() + " incompatible with weight " +
                     s.w0.shape());
  }
  const Matrix xw0 = matmul(x, s.w0);
  const Matrix xba = matmul(matmul(x, s.b), s.a);
  if (s.kind == AdapterKind::LoRA) return linear_combination(1.0, xw0, s.alpha, xba);

  const RowVector scale = factored_column_scale(s);
  Matrix y(x.rows(), s.d_out());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t j = 0; j < s.d_out(); ++j) {
      y(n, j) = scale[j] * (s.beta * xw0(n, j) + s.alpha * xba(n, j));
    }
  }
  return y;
}

namespace detail {

inline void require_finite(std::span<const double> v, const char* field) {
  if (!all_finite(v)) {
    throw NumericError(std::string("adapter_backward: non-finite gradient in ") + field);
  }
}

}  // namespace detail

// Gradients of a scalar loss L given dL/dy = d_y for y = adapter_forward(s, x).
// Fields that are not trainable for s.kind are returned as zeros.
inline AdapterGradients adapter_backward(const AdapterState& s, const Matrix& x,
                                         const Matrix& d_y) {
  validate(s);
  if (x.cols() != s.d_in()) {
    throw ShapeError("adapter_backward: input " + x.shape() + " incompatible with weight " +
                     s.w0.shape());
  }
  if (d_y.rows() != x.rows() || d_y.cols() != s.d_out()) {
    throw ShapeError("adapter_backward: upstream gradient " + d_y.shape() + ", expected " +
                     shape_str(x.rows(), s.d_out()));
  }
  const Matrix dw = matmul_tn(x, d_y);  // dL/dW, d_in x d_out

  AdapterGradients g;
  g.d_mag = RowVector(s.d_out());
  Matrix dv;  // dL/dV, with V = beta·W0 + alpha·B·A (LoRA: W0 + alpha·B·A)
  if (s.kind == AdapterKind::LoRA) {
    dv = dw;
  } else {
    const Matrix v = direction_numerator(s);
    dv = Matrix(s.d_in(), s.d_out());
    for (std::size_t j = 0; j < s.d_out(); ++j) {
      double sq = 0.0;
      for (std::size_t i = 0; i < s.d_in(); ++i) sq += v(i, j) * v(i, j);
      const double norm = std::sqrt(sq);
      const bool clamped = !(norm > s.epsilon);
      const double c = clamped ? s.epsilon : norm;
      double proj = 0.0;  // D[:, j] · v̂
      for (std::size_t i = 0; i < s.d_in(); ++i) proj += dw(i, j) * v(i, j) / c;
      g.d_mag[j] = proj;
      const double k = s.mag[j] / c;
      for (std::size_t i = 0; i < s.d_in(); ++i) {
        // The floored norm is constant in V, so the projection term drops out.
        dv(i, j) = clamped ? k * dw(i, j) : k * (dw(i, j) - proj * v(i, j) / c);
      }
    }
  }

  g.d_b = matmul_nt(dv, s.a);
  g.d_a = matmul_tn(s.b, dv);
  for (auto& e : g.d_b.values()) e *= s.alpha;
  for (auto& e : g.d_a.values()) e *= s.alpha;

  if (s.kind == AdapterKind::WoRA) {
    g.d_beta = frobenius_dot(dv, s.w0);
    g.d_alpha = frobenius_dot(dv, matmul(s.b, s.a));
  }
  if (s.kind == AdapterKind::LoRA) g.d_mag = RowVector(s.d_out());

  detail::require_finite(g.d_b.values(), "d_b");
  detail::require_finite(g.d_a.values(), "d_a");
  detail::require_finite(g.d_mag.values(), "d_mag");
  if (!std::isfinite(g.d_alpha)) throw NumericError("adapter_backward: non-finite gradient in d_alpha");
  if (!std::isfinite(g.d_beta)) throw NumericError("adapter_backward: non-finite gradient in d_beta");
  return g;
}

inline ParamCount count_params(AdapterKind kind, std::size_t d_in, std::size_t d_out,
                               std::size_t rank) {
  ParamCount pc;
  pc.breakdown["w0"] = d_in * d_out;
  pc.breakdown["b"] = d_in * rank;
  pc.breakdown["a"] = rank * d_out;
  pc.frozen = d_in * d_out;
  pc.trainable = rank * (d_in + d_out);
  if (kind != AdapterKind::LoRA) {
    pc.breakdown["mag"] = d_out;
    pc.trainable += d_out;
  }
  if (kind == AdapterKind::WoRA) {
    pc.breakdown["alpha"] = 1;
    pc.breakdown["beta"] = 1;
    pc.trainable += 2;
  }
  pc.total = pc.trainable + pc.frozen;
  return pc;
}

inline ParamCount count_params(const AdapterState& s) {
  return count_params(s.kind, s.d_in(), s.d_out(), s.rank);
}

// One plain SGD step on the trainable fields of s. Weight decay applies to
// the low-rank factors only.
inline AdapterState sgd_step(const AdapterState& s, const AdapterGradients& g, double lr,
                             double weight_decay = 0.0) {
  AdapterState next = s;
  auto step = [&](std::span<double> p, std::span<const double> dp, double decay) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (dp[i] + decay * p[i]);
  };
  step(next.b.values(), g.d_b.values(), weight_decay);
  step(next.a.values(), g.d_a.values(), weight_decay);
  if (s.kind != AdapterKind::LoRA) step(next.mag.values(), g.d_mag.values(), 0.0);
  if (s.kind == AdapterKind::WoRA) {
    next.alpha -= lr * g.d_alpha;
    next.beta -= lr * g.d_beta;
  }
  return next;
}

}  // namespace wora
