#include "orca/core.hpp"

#include <array>

namespace orca {

namespace {
constexpr std::array<std::string_view, kLevelCount> kLevelNames = {"B1", "B2", "B3", "B4"};
}

std::string_view to_string(BehaviorLevel level) {
  return kLevelNames[static_cast<std::size_t>(level)];
}

BehaviorLevel parse_level(std::string_view text) {
  for (std::size_t i = 0; i < kLevelNames.size(); ++i) {
    if (kLevelNames[i] == text) return static_cast<BehaviorLevel>(i);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown behavior level '" + std::string(text) + "'");
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NonMonotonicTick: return "NonMonotonicTick";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::TooFewDevices: return "TooFewDevices";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::NotWarmedUp: return "NotWarmedUp";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::UnknownFamily: return "UnknownFamily";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::MissingFamily: return "MissingFamily";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace orca
