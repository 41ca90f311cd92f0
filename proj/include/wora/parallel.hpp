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

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace wora {

// Resolves a requested thread count; 0 means hardware concurrency.
inline std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n) over contiguous chunks. Each index is handled by
// exactly one thread, so results written per index are independent of the
// thread count. The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      workers.emplace_back([&, t, lo, hi] {
        try {
          for (std::size_t i = lo; i < hi; ++i) body(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace wora
