#include "kraken/error.hpp"

namespace kraken {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::FieldOverflow: return "FieldOverflow";
        case ErrorCode::ReservedBitsSet: return "ReservedBitsSet";
        case ErrorCode::InvalidActivity: return "InvalidActivity";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::TruncatedRecord: return "TruncatedRecord";
        case ErrorCode::NonMonotoneTimestamp: return "NonMonotoneTimestamp";
        case ErrorCode::MalformedStream: return "MalformedStream";
        case ErrorCode::TimeRegression: return "TimeRegression";
        case ErrorCode::GeometryMismatch: return "GeometryMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidPackedByte: return "InvalidPackedByte";
        case ErrorCode::DimsMismatch: return "DimsMismatch";
        case ErrorCode::TooManyChannels: return "TooManyChannels";
        case ErrorCode::DegenerateFit: return "DegenerateFit";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace kraken
