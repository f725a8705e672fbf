// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_IO_HPP_
#define SIDE_IO_HPP_

#include <filesystem>

#include "side/tensor.hpp"

namespace side {

// Tensor container format, little-endian throughout:
//   magic "SIDT" | version u8 (=1) | dtype u8 (0=f32, 1=f64) | ndim u8 |
//   dims ndim x u32 | payload row-major values.
enum class DType : unsigned char { f32 = 0, f64 = 1 };

constexpr char kTensorMagic[4] = {'S', 'I', 'D', 'T'};
constexpr unsigned char kTensorVersion = 1;

void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  DType dtype);
Tensor read_tensor(const std::filesystem::path& path);

/// Parses a tensor from an in-memory buffer (the file reader delegates here;
/// tests feed it corrupted byte strings directly).
Tensor parse_tensor(std::span<const unsigned char> bytes);

}  // namespace side

#endif  // SIDE_IO_HPP_
