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

// Shared fixtures and slow reference implementations for the test suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "wora/adapters.hpp"
#include "wora/linalg.hpp"
#include "wora/rng.hpp"

namespace wora::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Xoshiro256& rng, double sd = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.normal(0.0, sd);
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline double max_abs_diff(const RowVector& a, const RowVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Textbook triple loop, i-j-k order.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

// Stable descending argsort.
inline std::vector<std::size_t> argsort_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Standalone DoRA: W = mag ⊙ (W0 + c·BA) / ‖W0 + c·BA‖_col, written per element.
struct ReferenceDora {
  Matrix w0, b, a;
  std::vector<double> mag;
  double c = 8.0;
  double eps = kDefaultEpsilon;

  double v(std::size_t i, std::size_t j) const {
    double ba = 0.0;
    for (std::size_t k = 0; k < b.cols(); ++k) ba += b(i, k) * a(k, j);
    return w0(i, j) + c * ba;
  }

  double col_norm(std::size_t j) const {
    double sq = 0.0;
    for (std::size_t i = 0; i < w0.rows(); ++i) sq += v(i, j) * v(i, j);
    return std::max(std::sqrt(sq), eps);
  }

  Matrix merge() const {
    Matrix out(w0.rows(), w0.cols());
    for (std::size_t j = 0; j < w0.cols(); ++j) {
      const double n = col_norm(j);
      for (std::size_t i = 0; i < w0.rows(); ++i) out(i, j) = mag[j] * v(i, j) / n;
    }
    return out;
  }

  // Gradients of L = Σ (x·W) ⊙ dy through the quotient rule,
  // ∂W_ij/∂V_kj = mag_j (δ_ik / n_j − V_ij V_kj / n_j³).
  struct Grads {
    Matrix d_b, d_a;
    std::vector<double> d_mag;
  };

  Grads grads(const Matrix& x, const Matrix& dy) const {
    const std::size_t m = w0.rows(), n = w0.cols(), r = b.cols();
    Matrix dw(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < x.rows(); ++t) dw(i, j) += x(t, i) * dy(t, j);
    Matrix dv(m, n);
    Grads g{Matrix(m, r), Matrix(r, n), std::vector<double>(n, 0.0)};
    for (std::size_t j = 0; j < n; ++j) {
      const double nj = col_norm(j);
      double proj = 0.0;
      for (std::size_t k = 0; k < m; ++k) proj += dw(k, j) * v(k, j);
      g.d_mag[j] = proj / nj;
      for (std::size_t i = 0; i < m; ++i) {
        dv(i, j) = nj > eps ? mag[j] * (dw(i, j) / nj - v(i, j) * proj / (nj * nj * nj))
                            : mag[j] * dw(i, j) / nj;
      }
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < r; ++k)
        for (std::size_t j = 0; j < n; ++j) g.d_b(i, k) += c * dv(i, j) * a(k, j);
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) g.d_a(k, j) += c * b(i, k) * dv(i, j);
    return g;
  }
};

// A random adapter state with nonzero B, so every path is exercised.
inline AdapterState random_state(std::size_t d_in, std::size_t d_out, std::size_t rank,
                                 AdapterKind kind, Xoshiro256& rng) {
  AdapterState s;
  s.w0 = random_matrix(d_in, d_out, rng);
  s.b = random_matrix(d_in, rank, rng, 0.5);
  s.a = random_matrix(rank, d_out, rng, 0.5);
  s.mag = RowVector(d_out);
  for (auto& m : s.mag) m = 0.5 + rng.uniform();
  s.rank = rank;
  s.kind = kind;
  if (kind == AdapterKind::LoRA) {
    s.alpha = lora_scale(rank);
  } else if (kind == AdapterKind::WoRA) {
    s.alpha = 0.5 + 1.5 * rng.uniform();
    s.beta = rng.uniform() < 0.5 ? -(0.5 + rng.uniform()) : 0.5 + rng.uniform();
  }
  return s;
}

}  // namespace wora::testing
