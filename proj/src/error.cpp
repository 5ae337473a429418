#include "posl/error.hpp"

namespace posl {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::InsufficientHistory: return "InsufficientHistory";
        case ErrorCode::NotYetEnrolled: return "NotYetEnrolled";
        case ErrorCode::SpecDoesNotFit: return "SpecDoesNotFit";
        case ErrorCode::TooFewSubjects: return "TooFewSubjects";
        case ErrorCode::SingularDesign: return "SingularDesign";
        case ErrorCode::MixedSubjects: return "MixedSubjects";
        case ErrorCode::StaleBatch: return "StaleBatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::StaleUpdate: return "StaleUpdate";
        case ErrorCode::NoMass: return "NoMass";
        case ErrorCode::DegenerateDesign: return "DegenerateDesign";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::MissingTruth: return "MissingTruth";
        case ErrorCode::NonStationarySpec: return "NonStationarySpec";
        case ErrorCode::InvalidMixture: return "InvalidMixture";
        case ErrorCode::DataValidation: return "DataValidation";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace posl
