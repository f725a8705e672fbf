// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "oracles.hpp"
#include "side/error.hpp"
#include "side/io.hpp"

using namespace side;

namespace {

std::vector<unsigned char> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("f32 header arithmetic: zeros 2x2 is 31 bytes") {
  testing::TempDir dir("io");
  const auto path = dir.path() / "z.sidt";
  write_tensor(path, Tensor({2, 2}), DType::f32);
  CHECK(std::filesystem::file_size(path) == 4 + 1 + 1 + 1 + 8 + 16);
}

TEST_CASE("f64 round-trip is bit-identical") {
  testing::TempDir dir("io");
  Rng rng(42);
  const Tensor t = testing::random_tensor(rng, {3, 7, 7}, -5.0, 5.0);
  const auto path = dir.path() / "t.sidt";
  write_tensor(path, t, DType::f64);
  const Tensor back = read_tensor(path);
  REQUIRE(back.dims() == t.dims());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("f32 round-trip is exact at f32 precision") {
  testing::TempDir dir("io");
  Rng rng(43);
  const Tensor t = testing::random_tensor(rng, {4, 5}, -5.0, 5.0);
  const auto path = dir.path() / "t.sidt";
  write_tensor(path, t, DType::f32);
  const Tensor back = read_tensor(path);
  REQUIRE(back.dims() == t.dims());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));
  }
}

TEST_CASE("bad magic is a distinct error") {
  testing::TempDir dir("io");
  const auto path = dir.path() / "bad.sidt";
  write_tensor(path, Tensor({2, 2}), DType::f32);
  auto bytes = file_bytes(path);
  bytes[0] = 'X';
  bytes[1] = 'X';
  try {
    parse_tensor(bytes);
    FAIL("expected bad magic error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::bad_magic);
  }
}

TEST_CASE("version mismatch is a distinct error") {
  testing::TempDir dir("io");
  const auto path = dir.path() / "v.sidt";
  write_tensor(path, Tensor({2, 2}), DType::f32);
  auto bytes = file_bytes(path);
  bytes[4] = 9;
  try {
    parse_tensor(bytes);
    FAIL("expected version error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::bad_version);
  }
}

TEST_CASE("dims overflow is a distinct error") {
  testing::TempDir dir("io");
  const auto path = dir.path() / "o.sidt";
  write_tensor(path, Tensor({1, 1, 1, 1, 1, 1, 1, 1}), DType::f64);
  auto bytes = file_bytes(path);
  // rewrite every extent to 2^32 - 1 so the element count overflows
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t b = 0; b < 4; ++b) bytes[7 + 4 * i + b] = 0xff;
  }
  try {
    parse_tensor(bytes);
    FAIL("expected overflow error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dims_overflow);
  }
}

TEST_CASE("every truncation is rejected with a structured error") {
  testing::TempDir dir("io");
  const auto path = dir.path() / "t.sidt";
  Rng rng(44);
  write_tensor(path, testing::random_tensor(rng, {2, 3}), DType::f32);
  const auto bytes = file_bytes(path);
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    try {
      parse_tensor(std::span<const unsigned char>(bytes.data(), len));
      FAIL("truncation to ", len, " bytes was accepted");
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::truncated ||
             e.code() == ErrorCode::bad_magic));
    }
  }
}

TEST_CASE("trailing bytes are rejected") {
  testing::TempDir dir("io");
  const auto path = dir.path() / "t.sidt";
  write_tensor(path, Tensor({2, 2}), DType::f64);
  auto bytes = file_bytes(path);
  bytes.push_back(0);
  try {
    parse_tensor(bytes);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
}

TEST_CASE("missing file reports invalid_argument") {
  try {
    read_tensor("/nonexistent/side/tensor.sidt");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_argument);
  }
}
