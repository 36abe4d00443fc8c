#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace llmcer {

enum class ErrorCode {
    ConstraintConflict,
    EmptyRecord,
    ZeroVector,
    DimMismatch,
    MissingRecord,
    ParseError,
    BadThresholds,
    NoValidationData,
    EmptyInput,
    TooFewPoints,
    BadK,
    EmptyBlock,
    MalformedResponse,
    MissingMember,
    DuplicateMember,
    UnknownLabel,
    ProviderUnavailable,
    UncoveredRecord,
    UniverseMismatch,
    TooFewRecords,
    DuplicateId,
    MissingHeader,
    EmptyFile,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace llmcer
