#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posl {

enum class ErrorCode {
    InvalidArgument,
    InsufficientHistory,
    NotYetEnrolled,
    SpecDoesNotFit,
    TooFewSubjects,
    SingularDesign,
    MixedSubjects,
    StaleBatch,
    DimensionMismatch,
    StaleUpdate,
    NoMass,
    DegenerateDesign,
    NonFinite,
    MissingTruth,
    NonStationarySpec,
    InvalidMixture,
    DataValidation,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Library error. Every failure path raises this with a code the caller can branch on.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace posl
