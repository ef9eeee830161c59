#pragma once

#include <stdexcept>
#include <string>

namespace spdcbell {

enum class ErrorCode {
  kInvalidArgument = 1,
  // Covariance matrix is not a physical state (det(gamma + I) <= 0, or a
  // probability came out of range beyond numerical noise).
  kInvalidState = 2,
  kNumericalFailure = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throw_invalid_argument(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

}  // namespace spdcbell
