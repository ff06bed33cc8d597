#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace gaussfind {

enum class ErrorCode {
    InvalidParameter,
    DimensionMismatch,
    Unparseable,
    SchemaViolation,
    DegenerateFinding,
    Timeout,
    AuthFailure,
    FixtureMissing,
    BackendUnavailable,
    UnsupportedFormat,
    CorruptImage,
    EmptyInput,
    IoError,
    NotFound,
    Conflict,
    PayloadTooLarge,
};

std::string_view to_string(ErrorCode code);

/// Typed failure raised by every pipeline stage. `detail` carries
/// machine-readable context (offending JSON paths, byte offsets, ...).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const nlohmann::json& detail() const noexcept { return detail_; }

    /// {"code": "...", "message": "...", "detail": ...}
    nlohmann::json to_json() const;

private:
    ErrorCode code_;
    nlohmann::json detail_;
};

}  // namespace gaussfind
