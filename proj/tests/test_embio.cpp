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

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "support.hpp"
#include "wora/embio.hpp"

using namespace wora;
using wora::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("wora_embio_" + name);
}

void write_raw(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string header_bytes(std::uint64_t rows, std::uint64_t dim) {
  std::string h = "EMB1";
  h += '\x01';
  h += '\x00';
  h += std::string(2, '\0');
  for (int i = 0; i < 8; ++i) h += static_cast<char>((rows >> (8 * i)) & 0xFF);
  for (int i = 0; i < 8; ++i) h += static_cast<char>((dim >> (8 * i)) & 0xFF);
  return h;
}

Matrix parse(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_emb1_section(in, bytes.size(), "buffer", true);
}

// Values exactly representable in f32.
Matrix f32_matrix(std::size_t rows, std::size_t cols, Xoshiro256& rng) {
  Matrix m = random_matrix(rows, cols, rng);
  for (auto& v : m.values()) v = static_cast<float>(v);
  return m;
}

}  // namespace

TEST_CASE("EMB1 bit layout", "[embio]") {
  const std::string ones = encode_emb1(Matrix(2, 3, 1.0));
  REQUIRE(ones.size() == 48);
  CHECK(ones.substr(0, 24) == header_bytes(2, 3));
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(ones.substr(24 + 4 * k, 4) == std::string("\x00\x00\x80\x3F", 4));
  }
  const std::string empty = encode_emb1(Matrix(0, 7));
  CHECK(empty == header_bytes(0, 7));
  CHECK(parse(empty).rows() == 0);
  CHECK(parse(empty).cols() == 7);
}

TEST_CASE("EMB1 round trip is exact at f32 precision", "[embio]") {
  Xoshiro256 rng(71);
  for (int t = 0; t < 10; ++t) {
    const Matrix m = f32_matrix(1 + rng.below(20), 1 + rng.below(20), rng);
    CHECK(parse(encode_emb1(m)) == m);
  }
  // Arbitrary doubles come back as their nearest f32.
  const Matrix raw = random_matrix(4, 4, rng);
  const Matrix back = parse(encode_emb1(raw));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(back.values()[i] == static_cast<double>(static_cast<float>(raw.values()[i])));
  }
}

TEST_CASE("embedding files and id sidecars round trip", "[embio]") {
  Xoshiro256 rng(72);
  const auto path = temp_path("rt.emb");
  EmbeddingMatrix m{{"a", "b", "c\"quoted\"", "é"}, f32_matrix(4, 5, rng)};
  write_embeddings(m, path);
  const auto back = read_embeddings(path);
  CHECK(back.ids == m.ids);
  CHECK(back.matrix == m.matrix);
  CHECK(fs::file_size(path) == 24 + 4 * 5 * 4);

  fs::remove(ids_sidecar_path(path));
  CHECK(read_embeddings(path).ids == std::vector<std::string>{"0", "1", "2", "3"});

  write_raw(ids_sidecar_path(path), "{\"row\":0,\"id\":\"a\"}\n");
  CHECK_THROWS_AS(read_embeddings(path), FormatError);
  write_raw(ids_sidecar_path(path), "not json\n");
  CHECK_THROWS_AS(read_embeddings(path), FormatError);
  write_raw(ids_sidecar_path(path),
            "{\"row\":0,\"id\":\"a\"}\n{\"row\":1,\"id\":\"a\"}\n{\"row\":2,\"id\":\"b\"}\n"
            "{\"row\":3,\"id\":\"c\"}\n");
  CHECK_THROWS_AS(read_embeddings(path), FormatError);  // duplicate id
  fs::remove(ids_sidecar_path(path));
  fs::remove(path);
}

TEST_CASE("reader errors", "[embio]") {
  CHECK_THROWS_AS(read_embeddings(temp_path("does-not-exist.emb")), IoError);

  std::string bad = encode_emb1(Matrix(2, 2, 1.0));
  bad[3] = '2';
  CHECK_THROWS_AS(parse(bad), FormatError);

  const std::string good = encode_emb1(Matrix(3, 2, 1.0));
  CHECK_THROWS_AS(parse(good.substr(0, good.size() - 1)), LengthError);
  CHECK_THROWS_AS(parse(good.substr(0, 10)), LengthError);
  CHECK_THROWS_AS(parse(good + "x"), LengthError);
}

TEST_CASE("non-finite payload names the row", "[embio]") {
  std::string bytes = encode_emb1(Matrix(10, 3, 0.5));
  const auto nan_bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  const std::size_t at = 24 + (7 * 3 + 1) * 4;
  for (int i = 0; i < 4; ++i) bytes[at + i] = static_cast<char>((nan_bits >> (8 * i)) & 0xFF);
  try {
    parse(bytes);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.row() == 7);
    CHECK(std::string(e.what()).find("row 7") != std::string::npos);
  }
  CHECK_THROWS_AS(encode_emb1(Matrix(1, 1, 1e300)), DataError);
}

TEST_CASE("every single-byte header corruption is rejected", "[embio][fuzz]") {
  const std::string good = encode_emb1(Matrix(2, 3, 0.25));
  std::size_t rejected = 0, tried = 0;
  for (std::size_t pos = 0; pos < kEmbHeaderSize; ++pos) {
    for (int v = 0; v < 256; ++v) {
      if (static_cast<unsigned char>(good[pos]) == v) continue;
      std::string bad = good;
      bad[pos] = static_cast<char>(v);
      ++tried;
      try {
        parse(bad);
      } catch (const FormatError&) {
        ++rejected;
      }
    }
  }
  CHECK(tried == 24 * 255);
  CHECK(rejected == tried);
}

TEST_CASE("size bombs are rejected before allocation", "[embio][fuzz]") {
  for (auto [rows, dim] : {std::pair<std::uint64_t, std::uint64_t>{1ull << 40, 1ull << 40},
                           {std::numeric_limits<std::uint64_t>::max(), 2},
                           {1ull << 62, 8},
                           {1, (1ull << 61) + 1}}) {
    const std::string bytes = header_bytes(rows, dim) + std::string(16, '\0');
    CHECK_THROWS_AS(parse(bytes), LengthError);
  }
  const auto path = temp_path("bomb.emb");
  write_raw(path, header_bytes(1ull << 40, 1ull << 40));
  CHECK_THROWS_AS(read_embeddings(path), LengthError);
  fs::remove(path);
}

TEST_CASE("checkpoints round trip", "[embio]") {
  Xoshiro256 rng(73);
  AdapterState s;
  s.w0 = f32_matrix(6, 5, rng);
  s.b = f32_matrix(6, 2, rng);
  s.a = f32_matrix(2, 5, rng);
  s.mag = RowVector(5, 1.5);
  s.rank = 2;
  s.alpha = 2.5;
  s.beta = -0.75;
  s.kind = AdapterKind::WoRA;
  const auto path = temp_path("ckpt.wck");
  write_checkpoint(s, path);
  const AdapterState back = read_checkpoint(path);
  CHECK(back.w0 == s.w0);
  CHECK(back.b == s.b);
  CHECK(back.a == s.a);
  CHECK(back.mag == s.mag);
  CHECK(back.alpha == s.alpha);
  CHECK(back.beta == s.beta);
  CHECK(back.kind == s.kind);
  CHECK(back.rank == 2);

  std::string bytes = encode_checkpoint(s);
  write_raw(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  write_raw(path, "WCK2" + bytes.substr(4));
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  fs::remove(path);
}

TEST_CASE("atomic writes leave no partial output", "[embio]") {
  const auto dir = temp_path("missing_dir");
  fs::remove_all(dir);
  CHECK_THROWS_AS(write_embeddings(Matrix(2, 2, 1.0), dir / "x.emb"), IoError);
  CHECK_FALSE(fs::exists(dir / "x.emb"));
  CHECK_FALSE(fs::exists(dir / "x.emb.tmp"));

  const auto path = temp_path("atomic.emb");
  write_embeddings(Matrix(1, 1, 1.0), path);
  CHECK_THROWS_AS(write_embeddings(Matrix(1, 1, 1e300), path), DataError);
  CHECK(read_embeddings(path).matrix == Matrix(1, 1, 1.0));
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  fs::remove(path);
  fs::remove(ids_sidecar_path(path));
}

TEST_CASE("JSONL and JSON helpers", "[embio]") {
  const auto path = temp_path("lines.jsonl");
  std::vector<Json> lines = {Json{{"a", 1}}, Json{{"b", "x"}}};
  write_file_atomic(path, encode_jsonl(lines));
  CHECK(read_jsonl(path) == lines);
  write_raw(path, "{\"a\":1}\n{oops\n");
  CHECK_THROWS_AS(read_jsonl(path), FormatError);
  fs::remove(path);
}
