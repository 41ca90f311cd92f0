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

// On-disk formats.
//
// EMB1 embedding file (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "EMB1"
//   4       1     version = 1
//   5       1     dtype = 0 (f32 LE)
//   6       2     reserved = 0
//   8       8     rows (u64)
//   16      8     dim (u64)
//   24      ...   rows * dim f32 values, row-major
//
// Row identifiers live in a sibling "<path>.ids.jsonl" with one
// {"row": i, "id": "..."} object per line.
//
// Adapter checkpoint:
//
//   "WCK1" | u32 LE header length | JSON header | EMB1 sections w0, b, a, mag
//
// where the JSON header is {kind, rank, alpha, beta, epsilon, d_in, d_out,
// sections} and mag is stored as a 1 x d_out section.

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "wora/adapters.hpp"
#include "wora/error.hpp"
#include "wora/linalg.hpp"

namespace wora {

using Json = nlohmann::ordered_json;

struct EmbeddingMatrix {
  std::vector<std::string> ids;
  Matrix matrix;

  std::size_t rows() const noexcept { return matrix.rows(); }
  std::size_t dim() const noexcept { return matrix.cols(); }
};

// Row i gets id "i".
inline std::vector<std::string> default_ids(std::size_t rows) {
  std::vector<std::string> ids(rows);
  for (std::size_t i = 0; i < rows; ++i) ids[i] = std::to_string(i);
  return ids;
}

inline void validate(const EmbeddingMatrix& m) {
  if (m.ids.size() != m.rows()) {
    throw ShapeError("embedding ids count " + std::to_string(m.ids.size()) +
                     " does not match rows " + std::to_string(m.rows()));
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& id : m.ids) {
    if (!seen.insert(id).second) throw FormatError("duplicate embedding id '" + id + "'");
  }
}

inline constexpr std::array<char, 4> kEmbMagic = {'E', 'M', 'B', '1'};
inline constexpr std::uint8_t kEmbVersion = 1;
inline constexpr std::uint8_t kEmbDtypeF32 = 0;
inline constexpr std::size_t kEmbHeaderSize = 24;

struct EmbFileHeader {
  std::uint64_t rows = 0;
  std::uint64_t dim = 0;
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return ss.str();
}

}  // namespace detail

// Writes `bytes` to a temporary sibling and renames it over `path`, so a
// failed write never leaves a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

// Header plus f32 payload for a matrix. Values must survive narrowing to f32.
inline std::string encode_emb1(const Matrix& m) {
  std::string out;
  out.reserve(kEmbHeaderSize + m.size() * 4);
  out.append(kEmbMagic.data(), kEmbMagic.size());
  out.push_back(static_cast<char>(kEmbVersion));
  out.push_back(static_cast<char>(kEmbDtypeF32));
  detail::put_u16(out, 0);
  detail::put_u64(out, m.rows());
  detail::put_u64(out, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (double v : m.row(i)) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) {
        throw DataError("value at row " + std::to_string(i) + " is not representable as f32", i);
      }
      detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

// Validates the fixed 24-byte header. Throws FormatError on any mismatch.
inline EmbFileHeader parse_emb1_header(std::span<const unsigned char, kEmbHeaderSize> h,
                                       const std::string& origin) {
  if (std::memcmp(h.data(), kEmbMagic.data(), kEmbMagic.size()) != 0) {
    throw FormatError(origin + ": bad magic (expected EMB1)");
  }
  if (h[4] != kEmbVersion) {
    throw FormatError(origin + ": unsupported version " + std::to_string(h[4]));
  }
  if (h[5] != kEmbDtypeF32) {
    throw FormatError(origin + ": unsupported dtype " + std::to_string(h[5]));
  }
  if (h[6] != 0 || h[7] != 0) throw FormatError(origin + ": reserved field is nonzero");
  return {detail::get_le(h.data() + 8, 8), detail::get_le(h.data() + 16, 8)};
}

// Payload byte count for a header, or LengthError if it cannot fit in
// `available` bytes. Runs before any payload allocation.
inline std::uint64_t checked_payload_bytes(const EmbFileHeader& h, std::uint64_t available,
                                           const std::string& origin) {
  const unsigned __int128 need = static_cast<unsigned __int128>(h.rows) * h.dim * 4u;
  if (need > available) {
    throw LengthError(origin + ": header declares " + std::to_string(h.rows) + "x" +
                      std::to_string(h.dim) + " values but only " + std::to_string(available) +
                      " payload bytes are present");
  }
  return static_cast<std::uint64_t>(need);
}

// Reads one EMB1 section from `in`, of which at most `available` bytes remain.
// With `exact`, the section must consume all of them.
inline Matrix read_emb1_section(std::istream& in, std::uint64_t available,
                                const std::string& origin, bool exact) {
  if (available < kEmbHeaderSize) throw LengthError(origin + ": truncated header");
  std::array<unsigned char, kEmbHeaderSize> raw{};
  in.read(reinterpret_cast<char*>(raw.data()), kEmbHeaderSize);
  if (in.gcount() != static_cast<std::streamsize>(kEmbHeaderSize)) {
    throw LengthError(origin + ": truncated header");
  }
  const EmbFileHeader h = parse_emb1_header(raw, origin);
  const std::uint64_t payload = checked_payload_bytes(h, available - kEmbHeaderSize, origin);
  if (exact && payload != available - kEmbHeaderSize) {
    throw LengthError(origin + ": payload is " + std::to_string(available - kEmbHeaderSize) +
                      " bytes, header implies " + std::to_string(payload));
  }
  std::vector<unsigned char> bytes(payload);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(payload));
  if (static_cast<std::uint64_t>(in.gcount()) != payload) {
    throw LengthError(origin + ": truncated payload");
  }
  const std::size_t rows = h.rows, dim = h.dim;
  Matrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const auto bits = static_cast<std::uint32_t>(detail::get_le(&bytes[(i * dim + j) * 4], 4));
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f)) {
        throw DataError(origin + ": non-finite value at row " + std::to_string(i), i);
      }
      m(i, j) = f;
    }
  }
  return m;
}

inline std::filesystem::path ids_sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".ids.jsonl";
  return p;
}

inline std::string encode_ids_jsonl(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Json line;
    line["row"] = i;
    line["id"] = ids[i];
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> parse_ids_jsonl(std::string_view text, std::size_t rows,
                                                const std::string& origin) {
  std::vector<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("row") || !j["row"].is_number_unsigned() ||
        !j.contains("id") || !j["id"].is_string()) {
      throw FormatError(origin + ":" + std::to_string(line_no) +
                        ": expected {\"row\": <index>, \"id\": <string>}");
    }
    if (j["row"].get<std::uint64_t>() != ids.size()) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": rows out of order");
    }
    ids.push_back(j["id"].get<std::string>());
  }
  if (ids.size() != rows) {
    throw FormatError(origin + ": " + std::to_string(ids.size()) + " ids for " +
                      std::to_string(rows) + " rows");
  }
  return ids;
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  validate(m);
  write_file_atomic(path, encode_emb1(m.matrix));
  write_file_atomic(ids_sidecar_path(path), encode_ids_jsonl(m.ids));
}

inline void write_embeddings(const Matrix& m, const std::filesystem::path& path) {
  write_embeddings(EmbeddingMatrix{default_ids(m.rows()), m}, path);
}

// Reads an EMB1 file and its id sidecar. A missing sidecar yields row-index ids.
inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot open " + path.string() + ": " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EmbeddingMatrix out;
  out.matrix = read_emb1_section(in, size, path.string(), /*exact=*/true);
  const auto sidecar = ids_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    out.ids = parse_ids_jsonl(detail::read_text_file(sidecar), out.matrix.rows(), sidecar.string());
  } else {
    out.ids = default_ids(out.matrix.rows());
  }
  validate(out);
  return out;
}

// JSONL with one object per line.
inline std::string encode_jsonl(const std::vector<Json>& lines) {
  std::string out;
  for (const auto& j : lines) {
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  std::vector<Json> out;
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_json(const Json& j, const std::filesystem::path& path) {
  write_file_atomic(path, j.dump(2) + "\n");
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(detail::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Adapter checkpoints

inline constexpr std::array<char, 4> kCheckpointMagic = {'W', 'C', 'K', '1'};

inline std::string encode_checkpoint(const AdapterState& s) {
  validate(s);
  Json header;
  header["kind"] = to_string(s.kind);
  header["rank"] = s.rank;
  header["alpha"] = s.alpha;
  header["beta"] = s.beta;
  header["epsilon"] = s.epsilon;
  header["d_in"] = s.d_in();
  header["d_out"] = s.d_out();
  header["sections"] = {"w0", "b", "a", "mag"};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += encode_emb1(s.w0);
  out += encode_emb1(s.b);
  out += encode_emb1(s.a);
  out += encode_emb1(Matrix(1, s.mag.size(), std::vector<double>(s.mag.begin(), s.mag.end())));
  return out;
}

inline void write_checkpoint(const AdapterState& s, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(s));
}

inline AdapterState read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = detail::read_text_file(path);
  const std::string origin = path.string();
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 4) != 0) {
    throw FormatError(origin + ": not an adapter checkpoint (bad magic)");
  }
  const auto header_len =
      detail::get_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 4, 4);
  if (header_len > bytes.size() - 8) throw LengthError(origin + ": truncated checkpoint header");
  Json h;
  try {
    h = Json::parse(bytes.substr(8, header_len));
    AdapterState s;
    s.kind = parse_adapter_kind(h.at("kind").get<std::string>());
    s.rank = h.at("rank").get<std::size_t>();
    s.alpha = h.at("alpha").get<double>();
    s.beta = h.at("beta").get<double>();
    s.epsilon = h.at("epsilon").get<double>();
    std::istringstream in(bytes.substr(8 + header_len));
    std::uint64_t remaining = bytes.size() - 8 - header_len;
    auto section = [&](const char* name) {
      const auto before = in.tellg();
      Matrix m = read_emb1_section(in, remaining, origin + " [" + name + "]", false);
      remaining -= static_cast<std::uint64_t>(in.tellg() - before);
      return m;
    };
    s.w0 = section("w0");
    s.b = section("b");
    s.a = section("a");
    const Matrix mag = section("mag");
    if (remaining != 0) throw LengthError(origin + ": trailing bytes after last section");
    if (mag.rows() != 1) throw FormatError(origin + ": mag section must have one row");
    s.mag = RowVector(std::vector<double>(mag.values().begin(), mag.values().end()));
    if (s.d_in() != h.at("d_in").get<std::size_t>() ||
        s.d_out() != h.at("d_out").get<std::size_t>()) {
      throw FormatError(origin + ": tensor shapes disagree with header dims");
    }
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad checkpoint header: " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(origin + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

}  // namespace wora
