#include "gazeseg/error.hpp"

namespace gazeseg {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::TraceTooShort: return "TraceTooShort";
        case ErrorCode::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
        case ErrorCode::EmptyFixationSet: return "EmptyFixationSet";
        case ErrorCode::MalformedLine: return "MalformedLine";
        case ErrorCode::EmptyFile: return "EmptyFile";
        case ErrorCode::BadRatio: return "BadRatio";
        case ErrorCode::NoTargetInSample: return "NoTargetInSample";
        case ErrorCode::NoFixations: return "NoFixations";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NotScalar: return "NotScalar";
        case ErrorCode::GraphConsumed: return "GraphConsumed";
        case ErrorCode::BadSpatialDims: return "BadSpatialDims";
        case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
        case ErrorCode::InsufficientLabeledData: return "InsufficientLabeledData";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NumericFailure: return "NumericFailure";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::BadRatio:
        case ErrorCode::InvalidArgument:
            return ErrorCategory::Config;
        case ErrorCode::NumericFailure:
            return ErrorCategory::Numeric;
        default:
            return ErrorCategory::Data;
    }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

MalformedLineError::MalformedLineError(std::size_t line_no, const std::string& detail)
    : Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + detail),
      line_no_(line_no) {}

ConfigError::ConfigError(std::string path, std::string key, const std::string& detail)
    : Error(ErrorCode::ConfigError, path + ": '" + key + "': " + detail),
      path_(std::move(path)),
      key_(std::move(key)) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace gazeseg
