#pragma once

#include <stdexcept>
#include <string>

namespace gfc {

enum class ErrorCode {
    kNonFiniteState = 1,
    kInvalidParams,
    kInvalidLoad,
    kUnknownBreaker,
    kSingularNetwork,
    kShapeMismatch,
    kEmptyBatch,
    kTrajectoryTooShort,
    kDiverged,
    kCorruptModel,
    kRecordTooShort,
    kAllRunsDiverged,
    kConfig,
    kIo,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace gfc
