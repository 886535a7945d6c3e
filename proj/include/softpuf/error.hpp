#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace softpuf {

enum class ErrorCode {
  invalid_parameter,
  already_enrolled,
  not_found,
  malformed_frame,
  malformed_datagram,
  mining_failed,
  integrity,
  io,
  transport,
  authentication_failed,
  resolver_unavailable,
  undefined_r2,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_parameter: return "invalid-parameter";
    case ErrorCode::already_enrolled: return "already-enrolled";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::malformed_frame: return "malformed-frame";
    case ErrorCode::malformed_datagram: return "malformed-datagram";
    case ErrorCode::mining_failed: return "mining-failed";
    case ErrorCode::integrity: return "integrity";
    case ErrorCode::io: return "io";
    case ErrorCode::transport: return "transport";
    case ErrorCode::authentication_failed: return "authentication-failed";
    case ErrorCode::resolver_unavailable: return "resolver-unavailable";
    case ErrorCode::undefined_r2: return "undefined-r2";
  }
  return "unknown";
}

// Every library failure is an Error carrying a stable code; decisions that
// are part of the protocol (reject, drop, deny, flag) are returned as values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by chain loading; names the first offending block.
class IntegrityError : public Error {
 public:
  IntegrityError(std::size_t block_index, const std::string& what)
      : Error(ErrorCode::integrity, "block " + std::to_string(block_index) + ": " + what),
        block_index_(block_index) {}

  std::size_t block_index() const noexcept { return block_index_; }

 private:
  std::size_t block_index_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::invalid_parameter, what);
}

}  // namespace softpuf
