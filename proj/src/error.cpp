#include "gfcsim/error.hpp"

namespace gfc {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kNonFiniteState: return "NonFiniteState";
        case ErrorCode::kInvalidParams: return "InvalidParams";
        case ErrorCode::kInvalidLoad: return "InvalidLoad";
        case ErrorCode::kUnknownBreaker: return "UnknownBreaker";
        case ErrorCode::kSingularNetwork: return "SingularNetwork";
        case ErrorCode::kShapeMismatch: return "ShapeMismatch";
        case ErrorCode::kEmptyBatch: return "EmptyBatch";
        case ErrorCode::kTrajectoryTooShort: return "TrajectoryTooShort";
        case ErrorCode::kDiverged: return "Diverged";
        case ErrorCode::kCorruptModel: return "CorruptModel";
        case ErrorCode::kRecordTooShort: return "RecordTooShort";
        case ErrorCode::kAllRunsDiverged: return "AllRunsDiverged";
        case ErrorCode::kConfig: return "Config";
        case ErrorCode::kIo: return "Io";
    }
    return "Unknown";
}

}  // namespace gfc
