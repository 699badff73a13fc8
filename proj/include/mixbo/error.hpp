#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mixbo {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  SingularKernel,
  NonFiniteSample,
  RejectionBudgetExceeded,
  EmptyDomain,
  AllStartsInfeasible,
  RelaxationExhausted,
  UnknownExperiment,
  IncompleteBatch,
  NonPositiveMetric,
  OutOfDomain,
  SchemaError,
  InvalidState,
  NotFound,
  Conflict,
  Internal,
};

// Operator-facing error category; every ErrorKind maps to exactly one.
enum class ApiCode { InvalidInput, NotFound, Conflict, Infeasible, Internal };

std::string_view to_string(ErrorKind kind);
std::string_view to_string(ApiCode code);
ApiCode api_code(ErrorKind kind);
int exit_code(ApiCode code);
int http_status(ApiCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(message), kind_(kind), detail_(std::move(detail)) {}

  ErrorKind kind() const { return kind_; }
  const nlohmann::json& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  nlohmann::json detail_;
};

// The structured envelope written to stderr by the CLI and returned by the
// HTTP service: {"error": {"code", "kind", "message", "detail"}}.
nlohmann::json error_envelope(const Error& e);
nlohmann::json error_envelope(ApiCode code, const std::string& message);

}  // namespace mixbo
