// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_ERROR_HPP_
#define SIDE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace side {

enum class ErrorCode {
  invalid_argument,
  dim_mismatch,
  out_of_range,
  bad_magic,
  bad_version,
  truncated,
  dims_overflow,
  format,
  io,
  numeric,
  internal,
};

/// Single exception type carrying a machine-readable code; the C API maps
/// codes to statuses, the CLI maps statuses to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace side

#endif  // SIDE_ERROR_HPP_
