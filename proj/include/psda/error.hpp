#pragma once

#include <stdexcept>
#include <string>

namespace psda {

// Mirrors psda_status in the C API header; keep the numeric values in sync.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kNotFound = 3,
  kNumeric = 4,
  kIo = 5,
  kState = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace psda
