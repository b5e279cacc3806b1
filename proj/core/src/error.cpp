#include "corellm/error.hpp"

namespace corellm {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kInvalidConfig: return "invalid config";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kOpen: return "open error";
    case ErrorCode::kTruncated: return "truncated checkpoint";
    case ErrorCode::kSizeMismatch: return "size mismatch";
    case ErrorCode::kResource: return "resource error";
    case ErrorCode::kSequenceOverflow: return "sequence overflow";
    case ErrorCode::kIndex: return "index error";
    case ErrorCode::kInvalidLogits: return "invalid logits";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kWrite: return "write error";
    case ErrorCode::kInvalidArgument: return "invalid argument";
  }
  return "error";
}

}  // namespace corellm
