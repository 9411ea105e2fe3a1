#include "gazeseg/error.hpp"

namespace gazeseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidParam: return "InvalidParam";
    case ErrorCode::kEmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::kInsufficientPoints: return "InsufficientPoints";
    case ErrorCode::kNoFixations: return "NoFixations";
    case ErrorCode::kEmptyPrompt: return "EmptyPrompt";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::kTruncatedData: return "TruncatedData";
    case ErrorCode::kBadHeader: return "BadHeader";
    case ErrorCode::kInvalidWindow: return "InvalidWindow";
    case ErrorCode::kOverlapError: return "OverlapError";
    case ErrorCode::kCorpusError: return "CorpusError";
    case ErrorCode::kCorruptLog: return "CorruptLog";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

}  // namespace gazeseg
