#pragma once

#include <stdexcept>
#include <string>

namespace asmpose {

// Failure classes surfaced by the library. Validation-type codes indicate bad
// inputs or files; the runtime codes indicate I/O or numerical trouble on
// otherwise well-formed inputs.
enum class ErrorCode {
    InvalidArgument,
    DegenerateConfiguration,
    NoConvergence,
    InsufficientInliers,
    ZeroDepthAxis,
    DepthHole,
    MissingMesh,
    InvalidStateGraph,
    CorruptDepth,
    FrameGap,
    SchemaViolation,
    IoFailure,
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::InsufficientInliers: return "InsufficientInliers";
        case ErrorCode::ZeroDepthAxis: return "ZeroDepthAxis";
        case ErrorCode::DepthHole: return "DepthHole";
        case ErrorCode::MissingMesh: return "MissingMesh";
        case ErrorCode::InvalidStateGraph: return "InvalidStateGraph";
        case ErrorCode::CorruptDepth: return "CorruptDepth";
        case ErrorCode::FrameGap: return "FrameGap";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // True for codes caused by bad inputs/files rather than runtime failure.
    bool is_validation() const noexcept {
        switch (code_) {
            case ErrorCode::InvalidArgument:
            case ErrorCode::MissingMesh:
            case ErrorCode::InvalidStateGraph:
            case ErrorCode::FrameGap:
            case ErrorCode::SchemaViolation:
                return true;
            default:
                return false;
        }
    }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace asmpose
