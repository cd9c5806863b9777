#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gazeseg {

// Error codes. Each maps onto one of the process exit categories used by the CLI.
enum class ErrorCode {
    TraceTooShort,
    NonMonotoneTimestamps,
    EmptyFixationSet,
    MalformedLine,
    EmptyFile,
    BadRatio,
    NoTargetInSample,
    NoFixations,
    DimMismatch,
    ShapeMismatch,
    NotScalar,
    GraphConsumed,
    BadSpatialDims,
    ClassOutOfRange,
    InsufficientLabeledData,
    EmptyBatch,
    EmptyMask,
    ConfigError,
    IoError,
    NumericFailure,
    InvalidArgument,
};

enum class ErrorCategory { Config = 2, Data = 3, Numeric = 4 };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
   public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

   private:
    ErrorCode code_;
};

// MalformedLine carries the 1-based line number of the offending data line.
class MalformedLineError : public Error {
   public:
    MalformedLineError(std::size_t line_no, const std::string& detail);
    std::size_t line_no() const noexcept { return line_no_; }

   private:
    std::size_t line_no_;
};

// ConfigError carries the config file path and the offending key.
class ConfigError : public Error {
   public:
    ConfigError(std::string path, std::string key, const std::string& detail);
    const std::string& path() const noexcept { return path_; }
    const std::string& key() const noexcept { return key_; }

   private:
    std::string path_;
    std::string key_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace gazeseg
