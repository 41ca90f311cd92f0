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

// `key = value` configuration files.
//
//   # comment
//   rank_threshold = 1800
//   kind = wora
//
// Unknown keys are rejected by name; malformed lines report their line number.

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "wora/adapters.hpp"
#include "wora/embio.hpp"
#include "wora/error.hpp"
#include "wora/filtering.hpp"
#include "wora/harness.hpp"

namespace wora {

struct Settings {
  FilterConfig filter;  // rank_threshold 50, distractor_count 10000
  std::size_t rank = 8;
  AdapterKind kind = AdapterKind::WoRA;
  std::optional<double> alpha;  // 8, or 8/rank for LoRA
  double beta = kDefaultBeta;
  double epsilon = kDefaultEpsilon;
  double eta = 0.8;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::size_t k_candidates = kDefaultCandidates;

  SyntheticSpec synthetic;
  HarnessConfig harness;

  // Keys that were set explicitly, from a file or from flags.
  std::set<std::string> explicit_keys;

  // Effective alpha for an adapter of the configured kind.
  double effective_alpha() const {
    if (alpha) return *alpha;
    return kind == AdapterKind::LoRA ? lora_scale(rank) : kDefaultAlpha;
  }

  AdapterOptions adapter_options() const {
    AdapterOptions o;
    o.alpha = alpha;
    o.beta = beta;
    o.epsilon = epsilon;
    return o;
  }

  // The seed propagates into every randomized component.
  SyntheticSpec synthetic_spec() const {
    SyntheticSpec s = synthetic;
    s.seed = seed;
    return s;
  }

  HarnessConfig harness_config() const {
    HarnessConfig h = harness;
    h.seed = seed;
    h.alpha = alpha;
    h.beta = beta;
    h.eta = eta;
    h.k_candidates = k_candidates;
    h.filter.seed = seed;
    return h;
  }

  FilterConfig filter_config() const {
    FilterConfig f = filter;
    f.seed = seed;
    return f;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean for '" + std::string(key) + "': '" + std::string(text) + "'");
}

using Setter = std::function<void(Settings&, std::string_view key, std::string_view value)>;

template <class T>
Setter set_count(T Settings::*group, std::size_t T::*field) {
  return [=](Settings& s, std::string_view k, std::string_view v) {
    s.*group.*field = parse_number<std::size_t>(k, v);
  };
}

template <class T>
Setter set_real(T Settings::*group, double T::*field) {
  return [=](Settings& s, std::string_view k, std::string_view v) {
    s.*group.*field = parse_number<double>(k, v);
  };
}

inline const std::map<std::string, Setter, std::less<>>& config_setters() {
  static const std::map<std::string, Setter, std::less<>> setters = {
      {"rank_threshold", set_count(&Settings::filter, &FilterConfig::rank_threshold)},
      {"distractor_count", set_count(&Settings::filter, &FilterConfig::distractor_count)},
      {"shared_sample",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.filter.shared_sample = parse_bool(k, v);
       }},
      {"seed",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.seed = parse_number<std::uint64_t>(k, v);
       }},
      {"rank",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.rank = parse_number<std::size_t>(k, v);
       }},
      {"kind",
       [](Settings& s, std::string_view, std::string_view v) {
         try {
           s.kind = parse_adapter_kind(v);
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       }},
      {"alpha",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.alpha = parse_number<double>(k, v);
       }},
      {"beta",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.beta = parse_number<double>(k, v);
       }},
      {"epsilon",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.epsilon = parse_number<double>(k, v);
       }},
      {"eta",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.eta = parse_number<double>(k, v);
       }},
      {"threads",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.threads = parse_number<std::size_t>(k, v);
       }},
      {"k_candidates",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.k_candidates = parse_number<std::size_t>(k, v);
       }},
      {"n_pairs", set_count(&Settings::synthetic, &SyntheticSpec::n_pairs)},
      {"dim_latent", set_count(&Settings::synthetic, &SyntheticSpec::dim_latent)},
      {"dim_embed", set_count(&Settings::synthetic, &SyntheticSpec::dim_embed)},
      {"pool_size", set_count(&Settings::synthetic, &SyntheticSpec::pool_size)},
      {"noise_std", set_real(&Settings::synthetic, &SyntheticSpec::noise_std)},
      {"corrupt_fraction", set_real(&Settings::synthetic, &SyntheticSpec::corrupt_fraction)},
      {"epochs", set_count(&Settings::harness, &HarnessConfig::epochs)},
      {"batch_size", set_count(&Settings::harness, &HarnessConfig::batch_size)},
      {"lr", set_real(&Settings::harness, &HarnessConfig::lr)},
      {"weight_decay", set_real(&Settings::harness, &HarnessConfig::weight_decay)},
      {"temperature", set_real(&Settings::harness, &HarnessConfig::temperature)},
      {"eval_pairs", set_count(&Settings::harness, &HarnessConfig::eval_pairs)},
      {"pretrain_pairs", set_count(&Settings::harness, &HarnessConfig::pretrain_pairs)},
      {"use_filter",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.harness.use_filter = parse_bool(k, v);
       }},
      // The toy harness runs its own, smaller filter.
      {"toy_rank_threshold",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.harness.filter.rank_threshold = parse_number<std::size_t>(k, v);
       }},
      {"toy_distractor_count",
       [](Settings& s, std::string_view k, std::string_view v) {
         s.harness.filter.distractor_count = parse_number<std::size_t>(k, v);
       }},
  };
  return setters;
}

}  // namespace detail

inline bool is_config_key(std::string_view key) {
  return detail::config_setters().find(key) != detail::config_setters().end();
}

// Applies one key to `s`. Unknown keys raise ConfigError naming the key.
inline void apply_setting(Settings& s, std::string_view key, std::string_view value) {
  const auto& setters = detail::config_setters();
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(s, key, value);
  s.explicit_keys.emplace(key);
}

inline Settings parse_config(std::string_view text, std::string_view origin = "<config>",
                             Settings base = {}) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (value.empty()) throw ConfigError(where + "missing value for '" + std::string(key) + "'");
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

inline Settings load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_text_file(path), path.string());
}

}  // namespace wora
