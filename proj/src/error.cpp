#include "mixbo/error.hpp"

namespace mixbo {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularKernel: return "SingularKernel";
    case ErrorKind::NonFiniteSample: return "NonFiniteSample";
    case ErrorKind::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
    case ErrorKind::EmptyDomain: return "EmptyDomain";
    case ErrorKind::AllStartsInfeasible: return "AllStartsInfeasible";
    case ErrorKind::RelaxationExhausted: return "RelaxationExhausted";
    case ErrorKind::UnknownExperiment: return "UnknownExperiment";
    case ErrorKind::IncompleteBatch: return "IncompleteBatch";
    case ErrorKind::NonPositiveMetric: return "NonPositiveMetric";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::InvalidState: return "InvalidState";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::Conflict: return "Conflict";
    case ErrorKind::Internal: return "Internal";
  }
  return "Internal";
}

std::string_view to_string(ApiCode code) {
  switch (code) {
    case ApiCode::InvalidInput: return "invalid_input";
    case ApiCode::NotFound: return "not_found";
    case ApiCode::Conflict: return "conflict";
    case ApiCode::Infeasible: return "infeasible";
    case ApiCode::Internal: return "internal";
  }
  return "internal";
}

ApiCode api_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::NonPositiveMetric:
    case ErrorKind::OutOfDomain:
    case ErrorKind::SchemaError:
    case ErrorKind::EmptyDomain:
      return ApiCode::InvalidInput;
    case ErrorKind::NotFound:
    case ErrorKind::UnknownExperiment:
      return ApiCode::NotFound;
    case ErrorKind::IncompleteBatch:
    case ErrorKind::InvalidState:
    case ErrorKind::Conflict:
      return ApiCode::Conflict;
    case ErrorKind::AllStartsInfeasible:
    case ErrorKind::RelaxationExhausted:
    case ErrorKind::RejectionBudgetExceeded:
      return ApiCode::Infeasible;
    case ErrorKind::SingularKernel:
    case ErrorKind::NonFiniteSample:
    case ErrorKind::Internal:
      return ApiCode::Internal;
  }
  return ApiCode::Internal;
}

int exit_code(ApiCode code) {
  switch (code) {
    case ApiCode::InvalidInput: return 2;
    case ApiCode::NotFound: return 3;
    case ApiCode::Conflict: return 4;
    case ApiCode::Infeasible: return 5;
    case ApiCode::Internal: return 1;
  }
  return 1;
}

int http_status(ApiCode code) {
  switch (code) {
    case ApiCode::InvalidInput: return 400;
    case ApiCode::NotFound: return 404;
    case ApiCode::Conflict: return 409;
    case ApiCode::Infeasible: return 422;
    case ApiCode::Internal: return 500;
  }
  return 500;
}

nlohmann::json error_envelope(const Error& e) {
  return {{"error",
           {{"code", to_string(api_code(e.kind()))},
            {"kind", to_string(e.kind())},
            {"message", e.what()},
            {"detail", e.detail()}}}};
}

nlohmann::json error_envelope(ApiCode code, const std::string& message) {
  return {{"error",
           {{"code", to_string(code)},
            {"kind", "Internal"},
            {"message", message},
            {"detail", nlohmann::json::object()}}}};
}

}  // namespace mixbo
