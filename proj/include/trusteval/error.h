#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trusteval {

enum class ErrorCode {
  kInvalidArgument,
  kConflictingRules,
  kUnknownFormat,
  kMissingPromptField,
  kDuplicateId,
  kDatasetNotInstalled,
  kDatasetNotFound,
  kUploadTooLarge,
  kEndpointUnavailable,
  kResponseMalformed,
  kTimeout,
  kUnsupported,
  kJudgeUnavailable,
  kUnparseableOutput,
  kNoJudgesAvailable,
  kEmptyInput,
  kNoGroundTruth,
  kRunNotFound,
  kInvalidConfig,
  kAlreadyRunning,
  kAlreadyFinished,
  kUnauthorized,
  kNotFound,
  kIoError,
};

// Machine-readable snake_case name, e.g. "run_not_found".
std::string_view ErrorCodeName(ErrorCode code);

// HTTP status the service maps the code onto.
int ErrorHttpStatus(ErrorCode code);

// All recoverable failures in the library are reported as an Error carrying
// a code and optional field-level details.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::map<std::string, std::string> details = {})
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const { return code_; }
  const std::map<std::string, std::string>& details() const { return details_; }

 private:
  ErrorCode code_;
  std::map<std::string, std::string> details_;
};

}  // namespace trusteval
