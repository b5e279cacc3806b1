#pragma once

#include <stdexcept>
#include <string>

namespace corellm {

enum class ErrorCode {
  kFormat,
  kInvalidConfig,
  kOverflow,
  kOpen,
  kTruncated,
  kSizeMismatch,
  kResource,
  kSequenceOverflow,
  kIndex,
  kInvalidLogits,
  kEmptyInput,
  kWrite,
  kInvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library. The CLI prints what() as its
// one-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace corellm
