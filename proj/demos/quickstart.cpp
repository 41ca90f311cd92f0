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

// Quickstart: wrap a base weight with a WoRA adapter, take a few SGD steps
// on a toy regression target, then merge back into one matrix.

#include <cstdio>

#include "wora/adapters.hpp"
#include "wora/linalg.hpp"
#include "wora/rng.hpp"

int main() {
  using namespace wora;
  constexpr std::size_t d_in = 12, d_out = 10, batch = 32;

  Xoshiro256 rng(7);
  Matrix w0(d_in, d_out), target(d_in, d_out), x(batch, d_in);
  for (auto& v : w0.values()) v = rng.normal();
  target = w0;
  for (std::size_t i = 0; i < d_in; ++i) target(i, 0) += 0.5 * rng.normal();  // rank-1 shift
  for (auto& v : x.values()) v = rng.normal();
  const Matrix y_target = matmul(x, target);

  AdapterState s = init_adapter(w0, 2, AdapterKind::WoRA, /*seed=*/1);
  std::printf("trainable parameters: %zu of %zu\n", count_params(s).trainable,
              count_params(s).total);

  for (int step = 0; step <= 200; ++step) {
    const Matrix y = adapter_forward(s, x);
    // Mean squared error and its gradient with respect to y.
    Matrix dy = linear_combination(1.0, y, -1.0, y_target);
    const double loss = frobenius_dot(dy, dy) / static_cast<double>(batch);
    for (auto& v : dy.values()) v *= 2.0 / static_cast<double>(batch);
    if (step % 50 == 0) std::printf("step %3d  loss %.5f\n", step, loss);
    s = sgd_step(s, adapter_backward(s, x, dy), 0.01);
  }

  const Matrix merged = merge_and_freeze(s);
  const double gap = frobenius_norm(linear_combination(1.0, adapter_forward(s, x), -1.0,
                                                       matmul(x, merged)));
  std::printf("alpha %.4f  beta %.4f  factored vs merged output gap %.2e\n", s.alpha, s.beta, gap);
  return 0;
}
