#pragma once

#include <stdexcept>
#include <string>

namespace spiralrep {

enum class ErrorCode {
  io,
  unsupported_dimensionality,
  unsupported_element_type,
  unsupported_format,
  size_mismatch,
  parse,
  invalid_argument,
  empty_schedule,
  unresolved_scan,
  consistency,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::unsupported_dimensionality: return "unsupported dimensionality";
    case ErrorCode::unsupported_element_type: return "unsupported element type";
    case ErrorCode::unsupported_format: return "unsupported format";
    case ErrorCode::size_mismatch: return "size mismatch";
    case ErrorCode::parse: return "parse";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::empty_schedule: return "empty schedule";
    case ErrorCode::unresolved_scan: return "unresolved scan";
    case ErrorCode::consistency: return "consistency";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spiralrep
