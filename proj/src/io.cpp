// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "side/error.hpp"

namespace side {

namespace {

static_assert(std::endian::native == std::endian::little,
              "SIDT serialization assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  DType dtype) {
  require(t.rank() <= 255, ErrorCode::invalid_argument,
          "tensor rank exceeds format limit");
  for (std::size_t d : t.dims()) {
    require(d <= UINT32_MAX, ErrorCode::dims_overflow,
            "tensor extent exceeds 32 bits");
  }
  std::string buf;
  buf.reserve(7 + 4 * t.rank() + t.size() * (dtype == DType::f32 ? 4 : 8));
  buf.append(kTensorMagic, 4);
  buf.push_back(static_cast<char>(kTensorVersion));
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.dims()) put_u32(buf, static_cast<std::uint32_t>(d));
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float v = static_cast<float>(t[i]);
      char raw[4];
      std::memcpy(raw, &v, 4);
      buf.append(raw, 4);
    }
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double v = t[i];
      char raw[8];
      std::memcpy(raw, &v, 8);
      buf.append(raw, 8);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io,
          "cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  require(out.good(), ErrorCode::io, "write failed: " + path.string());
}

Tensor parse_tensor(std::span<const unsigned char> bytes) {
  require(bytes.size() >= 4, ErrorCode::truncated,
          "tensor file truncated before magic");
  require(std::memcmp(bytes.data(), kTensorMagic, 4) == 0,
          ErrorCode::bad_magic, "bad tensor file magic");
  require(bytes.size() >= 7, ErrorCode::truncated,
          "tensor file truncated in header");
  require(bytes[4] == kTensorVersion, ErrorCode::bad_version,
          "unsupported tensor file version " + std::to_string(bytes[4]));
  const unsigned char dtype_byte = bytes[5];
  require(dtype_byte <= 1, ErrorCode::format,
          "unknown tensor dtype " + std::to_string(dtype_byte));
  const DType dtype = static_cast<DType>(dtype_byte);
  const std::size_t ndim = bytes[6];
  require(ndim >= 1, ErrorCode::format, "tensor file has zero dims");
  const std::size_t dims_end = 7 + 4 * ndim;
  require(bytes.size() >= dims_end, ErrorCode::truncated,
          "tensor file truncated in dims");
  std::vector<std::size_t> dims(ndim);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32(bytes.data() + 7 + 4 * i);
    require(d >= 1, ErrorCode::format, "tensor extent is zero");
    require(count <= UINT64_MAX / d, ErrorCode::dims_overflow,
            "tensor dims overflow");
    count *= d;
    dims[i] = d;
  }
  const std::size_t elem = dtype == DType::f32 ? 4 : 8;
  require(count <= (UINT64_MAX - dims_end) / elem, ErrorCode::dims_overflow,
          "tensor payload size overflows");
  const std::uint64_t expected = dims_end + count * elem;
  require(bytes.size() >= expected, ErrorCode::truncated,
          "tensor payload truncated");
  require(bytes.size() == expected, ErrorCode::format,
          "trailing bytes after tensor payload");
  std::vector<double> data(count);
  const unsigned char* p = bytes.data() + dims_end;
  if (dtype == DType::f32) {
    for (std::uint64_t i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, p + 4 * i, 4);
      data[i] = v;
    }
  } else {
    std::memcpy(data.data(), p, count * 8);
  }
  return Tensor(std::move(dims), std::move(data));
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::invalid_argument,
          "cannot open tensor file: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::io, "read failed: " + path.string());
  return parse_tensor(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));
}

}  // namespace side
