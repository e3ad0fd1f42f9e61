#pragma once

#include <stdexcept>
#include <string>

namespace pgam {

enum class ErrorCode {
  InvalidArgument,
  MissingFile,
  MissingColumn,
  ParseError,
  EmptyResult,
  NotCanonical,
  UndefinedMetric,
  NotFound,
  Exhausted,
  NoValidModel,
  Conflict,
  Corrupt,
  VersionMismatch,
  Finalized,
  Io,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// R² is undefined on a zero-variance target; RMSE is still reported.
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(double rmse)
      : Error(ErrorCode::UndefinedMetric, "R^2 undefined: target has zero variance"),
        rmse_(rmse) {}

  double rmse() const noexcept { return rmse_; }

 private:
  double rmse_;
};

}  // namespace pgam
