#pragma once

#include <stdexcept>
#include <string>

namespace thermophase {

enum class ErrorCode {
  ConfigInvalid,
  InvalidInitialData,
  ResolventDivergence,
  NonpositiveTemperature,
  NegativeBoundarySource,
  NewtonDivergence,
  ActiveSetCycling,
  LinearSolveFailure,
  PositivityLoss,
  StepDivergence,
  WindowMisaligned,
  NegativeTestFunction,
  InadmissibleTestField,
  SearchBoxTooSmall,
  IoError,
  BadArgument,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* errorCodeName(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InvalidInitialData: return "InvalidInitialData";
    case ErrorCode::ResolventDivergence: return "ResolventDivergence";
    case ErrorCode::NonpositiveTemperature: return "NonpositiveTemperature";
    case ErrorCode::NegativeBoundarySource: return "NegativeBoundarySource";
    case ErrorCode::NewtonDivergence: return "NewtonDivergence";
    case ErrorCode::ActiveSetCycling: return "ActiveSetCycling";
    case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::PositivityLoss: return "PositivityLoss";
    case ErrorCode::StepDivergence: return "StepDivergence";
    case ErrorCode::WindowMisaligned: return "WindowMisaligned";
    case ErrorCode::NegativeTestFunction: return "NegativeTestFunction";
    case ErrorCode::InadmissibleTestField: return "InadmissibleTestField";
    case ErrorCode::SearchBoxTooSmall: return "SearchBoxTooSmall";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadArgument: return "BadArgument";
  }
  return "Unknown";
}

}  // namespace thermophase
