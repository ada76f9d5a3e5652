#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ood {

enum class ErrorCode {
  invalid_argument,  // violated precondition, dimension mismatch
  unavailable,       // no closed form for the requested quantity
  config,            // experiment configuration rejected
  data,              // file I/O or malformed input file
  numerical,         // factorization failure, degenerate fit
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::invalid_argument, message);
}

}  // namespace ood
