#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gazeseg {

enum class ErrorCode {
  kShapeMismatch,
  kOutOfBounds,
  kEmptyInput,
  kInvalidParam,
  kEmptyGroundTruth,
  kInsufficientPoints,
  kNoFixations,
  kEmptyPrompt,
  kEmptyMask,
  kBackendUnavailable,
  kProtocolError,
  kBadMagic,
  kUnsupportedDatatype,
  kTruncatedData,
  kBadHeader,
  kInvalidWindow,
  kOverlapError,
  kCorpusError,
  kCorruptLog,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// All domain failures surface as this exception; `code()` is the stable,
// machine-readable name used in CLI diagnostics and wire error bodies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail);

}  // namespace gazeseg
