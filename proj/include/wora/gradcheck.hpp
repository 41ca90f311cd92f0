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

// Central finite-difference verification of adapter_backward.
//
// The probe loss is L = Σ (x · W) ⊙ G for a fixed upstream G, evaluated by
// an independent extended-precision merge of the adapter weight. Nothing here
// calls adapter_forward or adapter_backward on the numeric side.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wora/adapters.hpp"
#include "wora/rng.hpp"

namespace wora {

inline constexpr double kGradCheckStep = 1e-5;
// Below this derivative magnitude the relative tolerance relaxes to 1e-4.
inline constexpr double kSmallDerivative = 1e-8;
inline constexpr double kSmallDerivativeTolerance = 1e-4;

struct GradCheckField {
  std::string name;
  std::size_t entries = 0;
  std::size_t small_entries = 0;
  double max_rel_error = 0.0;        // over entries with |derivative| >= 1e-8
  double max_rel_error_small = 0.0;  // over the remaining entries
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckField> fields;
  bool passed = true;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& f : fields) m = std::max(m, f.max_rel_error);
    return m;
  }
};

struct GradCheckInstance {
  AdapterState state;
  Matrix x;
  Matrix upstream;
};

// Probe loss Σ (x · W) ⊙ G in long double, W merged from s.
inline long double probe_loss(const AdapterState& s, const Matrix& x, const Matrix& upstream) {
  using ld = long double;
  const std::size_t m = s.d_in(), n = s.d_out(), r = s.rank;
  std::vector<ld> w(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      ld ba = 0;
      for (std::size_t k = 0; k < r; ++k) ba += static_cast<ld>(s.b(i, k)) * s.a(k, j);
      w[i * n + j] = s.kind == AdapterKind::LoRA
                         ? static_cast<ld>(s.w0(i, j)) + static_cast<ld>(s.alpha) * ba
                         : static_cast<ld>(s.beta) * s.w0(i, j) + static_cast<ld>(s.alpha) * ba;
    }
  }
  if (s.kind != AdapterKind::LoRA) {
    for (std::size_t j = 0; j < n; ++j) {
      ld sq = 0;
      for (std::size_t i = 0; i < m; ++i) sq += w[i * n + j] * w[i * n + j];
      const ld c = std::max(std::sqrt(sq), static_cast<ld>(s.epsilon));
      for (std::size_t i = 0; i < m; ++i) w[i * n + j] *= static_cast<ld>(s.mag[j]) / c;
    }
  }
  ld loss = 0;
  for (std::size_t b = 0; b < x.rows(); ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      ld y = 0;
      for (std::size_t i = 0; i < m; ++i) y += static_cast<ld>(x(b, i)) * w[i * n + j];
      loss += y * upstream(b, j);
    }
  }
  return loss;
}

namespace detail {

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  return denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
}

// Perturbs each scalar reachable through `param` and compares against `analytic`.
template <typename Access>
GradCheckField check_field(const std::string& name, AdapterState probe, std::size_t count,
                           Access param, std::span<const double> analytic, const Matrix& x,
                           const Matrix& upstream, double tol, double h) {
  GradCheckField f;
  f.name = name;
  for (std::size_t i = 0; i < count; ++i) {
    double& p = param(probe, i);
    const double saved = p;
    const double plus = saved + h;
    const double minus = saved - h;
    p = plus;
    const long double lp = probe_loss(probe, x, upstream);
    p = minus;
    const long double lm = probe_loss(probe, x, upstream);
    p = saved;
    const double numeric = static_cast<double>((lp - lm) / (static_cast<long double>(plus) - minus));
    const double err = relative_error(analytic[i], numeric);
    ++f.entries;
    if (std::max(std::abs(analytic[i]), std::abs(numeric)) < kSmallDerivative) {
      ++f.small_entries;
      f.max_rel_error_small = std::max(f.max_rel_error_small, err);
      if (!(err < std::max(tol, kSmallDerivativeTolerance))) f.passed = false;
    } else {
      f.max_rel_error = std::max(f.max_rel_error, err);
      if (!(err < tol)) f.passed = false;
    }
  }
  return f;
}

}  // namespace detail

inline GradCheckReport check_gradients(const AdapterState& s, const Matrix& x,
                                       const Matrix& upstream, double tol,
                                       double h = kGradCheckStep) {
  const AdapterGradients g = adapter_backward(s, x, upstream);
  GradCheckReport report;
  auto add = [&](GradCheckField f) {
    report.passed = report.passed && f.passed;
    report.fields.push_back(std::move(f));
  };
  add(detail::check_field(
      "B", s, s.b.size(), [](AdapterState& p, std::size_t i) -> double& { return p.b.values()[i]; },
      g.d_b.values(), x, upstream, tol, h));
  add(detail::check_field(
      "A", s, s.a.size(), [](AdapterState& p, std::size_t i) -> double& { return p.a.values()[i]; },
      g.d_a.values(), x, upstream, tol, h));
  if (s.kind != AdapterKind::LoRA) {
    add(detail::check_field(
        "mag", s, s.mag.size(),
        [](AdapterState& p, std::size_t i) -> double& { return p.mag[i]; }, g.d_mag.values(), x,
        upstream, tol, h));
  }
  if (s.kind == AdapterKind::WoRA) {
    const double d_alpha[] = {g.d_alpha};
    const double d_beta[] = {g.d_beta};
    add(detail::check_field(
        "alpha", s, 1, [](AdapterState& p, std::size_t) -> double& { return p.alpha; }, d_alpha,
        x, upstream, tol, h));
    add(detail::check_field(
        "beta", s, 1, [](AdapterState& p, std::size_t) -> double& { return p.beta; }, d_beta, x,
        upstream, tol, h));
  }
  return report;
}

// Random generic instance: every factor nonzero so no gradient is
// structurally zero.
inline GradCheckInstance random_gradcheck_instance(std::size_t d_in, std::size_t d_out,
                                                   std::size_t rank, AdapterKind kind,
                                                   std::uint64_t seed, std::size_t batch = 5) {
  check_rank(rank, d_in, d_out);
  Xoshiro256 rng(seed);
  auto fill = [&](Matrix& m, double stddev) {
    for (auto& v : m.values()) v = rng.normal(0.0, stddev);
  };
  GradCheckInstance inst;
  AdapterState& s = inst.state;
  s.kind = kind;
  s.rank = rank;
  s.w0 = Matrix(d_in, d_out);
  s.b = Matrix(d_in, rank);
  s.a = Matrix(rank, d_out);
  fill(s.w0, 1.0);
  fill(s.b, 0.5);
  fill(s.a, 1.0 / std::sqrt(static_cast<double>(rank)));
  s.mag = RowVector(d_out);
  for (auto& v : s.mag) v = 0.5 + rng.uniform();
  s.alpha = kind == AdapterKind::LoRA ? lora_scale(rank) : 0.5 + 1.5 * rng.uniform();
  s.beta = kind == AdapterKind::LoRA ? 1.0 : (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
  inst.x = Matrix(batch, d_in);
  inst.upstream = Matrix(batch, d_out);
  fill(inst.x, 1.0);
  fill(inst.upstream, 1.0);
  return inst;
}

struct GradCheckSuiteOptions {
  std::size_t instances = 20;
  std::size_t d_in = 0;   // 0: random in [rank + 1, 16]
  std::size_t d_out = 0;  // 0: random in [rank + 1, 16]
  std::size_t rank = 0;   // 0: random in [1, 4]
  AdapterKind kind = AdapterKind::WoRA;
  std::uint64_t seed = 0;
  double tol = 1e-6;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckReport> reports;
  std::vector<GradCheckField> per_parameter;  // worst case per field over all instances
  bool passed = true;
};

inline GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& opts) {
  GradCheckSuiteResult out;
  for (std::size_t k = 0; k < opts.instances; ++k) {
    Xoshiro256 shape_rng(derive_seed(opts.seed, k));
    std::size_t max_rank = 4;
    if (opts.d_in) max_rank = std::min(max_rank, opts.d_in - 1);
    if (opts.d_out) max_rank = std::min(max_rank, opts.d_out - 1);
    if (!opts.rank && max_rank == 0) throw ConfigError("gradcheck: dims too small for any rank");
    const std::size_t rank = opts.rank ? opts.rank : 1 + shape_rng.below(max_rank);
    auto pick = [&](std::size_t fixed) {
      return fixed ? fixed : rank + 1 + shape_rng.below(16 - rank);
    };
    const std::size_t d_in = pick(opts.d_in);
    const std::size_t d_out = pick(opts.d_out);
    const auto inst =
        random_gradcheck_instance(d_in, d_out, rank, opts.kind, derive_seed(opts.seed, 1000 + k));
    auto report = check_gradients(inst.state, inst.x, inst.upstream, opts.tol);
    out.passed = out.passed && report.passed;
    for (const auto& f : report.fields) {
      auto it = std::find_if(out.per_parameter.begin(), out.per_parameter.end(),
                             [&](const GradCheckField& e) { return e.name == f.name; });
      if (it == out.per_parameter.end()) {
        out.per_parameter.push_back(f);
        continue;
      }
      it->entries += f.entries;
      it->small_entries += f.small_entries;
      it->max_rel_error = std::max(it->max_rel_error, f.max_rel_error);
      it->max_rel_error_small = std::max(it->max_rel_error_small, f.max_rel_error_small);
      it->passed = it->passed && f.passed;
    }
    out.reports.push_back(std::move(report));
  }
  return out;
}

}  // namespace wora
