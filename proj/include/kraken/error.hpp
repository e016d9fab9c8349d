#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kraken {

enum class ErrorCode {
    FieldOverflow,
    ReservedBitsSet,
    InvalidActivity,
    InvalidConfig,
    BadMagic,
    VersionMismatch,
    TruncatedRecord,
    NonMonotoneTimestamp,
    MalformedStream,
    TimeRegression,
    GeometryMismatch,
    ShapeMismatch,
    InvalidPackedByte,
    DimsMismatch,
    TooManyChannels,
    DegenerateFit,
    IoFailure,
    ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the simulator; callers switch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace kraken
