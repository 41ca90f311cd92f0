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

// Minimal dense linear algebra: row-major f64 matrices, matmul, column
// norms, cosine similarity and deterministic top-k selection.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wora/error.hpp"

namespace wora {

inline constexpr double kDefaultEpsilon = 1e-8;

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

// Dense row-major matrix of doubles. Elements are finite after construction
// from external data; element access is unchecked.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(rows_, cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw NumericError("non-finite matrix element at row " +
                           std::to_string(i / std::max<std::size_t>(cols_, 1)));
      }
    }
  }

  // Nested-list construction, for tests and small fixtures.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::string shape() const { return shape_str(rows_, cols_); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A 1 x n row of doubles (per-column magnitudes, score lists, ...).
class RowVector {
 public:
  RowVector() = default;
  explicit RowVector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  explicit RowVector(std::vector<double> data) : data_(std::move(data)) {}
  RowVector(std::initializer_list<double> values) : data_(values) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const RowVector&) const = default;

 private:
  std::vector<double> data_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.shape() + " x " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

// aᵀ · b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: shape mismatch " + a.shape() + "^T x " + b.shape());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

// a · bᵀ. Transposing b first keeps the inner loop a vectorizable axpy.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: shape mismatch " + a.shape() + " x " + b.shape() + "^T");
  }
  return matmul(a, transpose(b));
}

// ca·a + cb·b.
inline Matrix linear_combination(double ca, const Matrix& a, double cb, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("linear_combination: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix out(a.rows(), a.cols());
  auto o = out.values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ca * av[i] + cb * bv[i];
  return out;
}

inline double frobenius_dot(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("frobenius_dot: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  double acc = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return acc;
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_dot(a, a)); }

// output[j] = max(‖v[:, j]‖₂, epsilon).
inline RowVector column_l2_norm(const Matrix& v, double epsilon = kDefaultEpsilon) {
  if (v.empty()) throw ShapeError("column_l2_norm: empty matrix " + v.shape());
  if (!(epsilon >= 0.0)) throw ConfigError("column_l2_norm: epsilon must be >= 0");
  RowVector sq(v.cols());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    auto r = v.row(i);
    for (std::size_t j = 0; j < v.cols(); ++j) sq[j] += r[j] * r[j];
  }
  for (auto& x : sq) x = std::max(std::sqrt(x), epsilon);
  return sq;
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

// Zero vectors have cosine 0 with everything.
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine_similarity: length mismatch " + std::to_string(u.size()) +
                     " vs " + std::to_string(v.size()));
  }
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return dot(u, v) / std::sqrt(uu * vv);
}

// Gallery with cached row norms for repeated cosine queries.
class CosineGallery {
 public:
  explicit CosineGallery(const Matrix& gallery) : gallery_(&gallery), norms_(gallery.rows()) {
    for (std::size_t i = 0; i < gallery.rows(); ++i) {
      auto r = gallery.row(i);
      norms_[i] = std::sqrt(dot(r, r));
    }
  }

  std::size_t size() const noexcept { return norms_.size(); }
  std::size_t dim() const noexcept { return gallery_->cols(); }
  std::size_t zero_rows() const {
    return static_cast<std::size_t>(std::count(norms_.begin(), norms_.end(), 0.0));
  }

  double score(std::span<const double> query, double query_norm, std::size_t i) const {
    if (query_norm == 0.0 || norms_[i] == 0.0) return 0.0;
    return dot(query, gallery_->row(i)) / (query_norm * norms_[i]);
  }

  RowVector scores(std::span<const double> query) const {
    if (query.size() != dim()) {
      throw ShapeError("cosine_similarity_batch: query length " + std::to_string(query.size()) +
                       " vs gallery " + gallery_->shape());
    }
    const double qn = std::sqrt(dot(query, query));
    RowVector out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = score(query, qn, i);
    return out;
  }

 private:
  const Matrix* gallery_;
  std::vector<double> norms_;
};

inline RowVector cosine_similarity_batch(std::span<const double> query, const Matrix& gallery) {
  return CosineGallery(gallery).scores(query);
}

// Indices of the k largest scores, descending; ties by ascending index.
// k is clamped to the number of scores.
inline std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw ConfigError("top_k_indices: k must be >= 1");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

inline std::vector<std::size_t> top_k_indices(const RowVector& scores, std::size_t k) {
  return top_k_indices(scores.values(), k);
}

}  // namespace wora
