#include "trusteval/error.h"

namespace trusteval {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kConflictingRules: return "conflicting_rules";
    case ErrorCode::kUnknownFormat: return "unknown_format";
    case ErrorCode::kMissingPromptField: return "missing_prompt_field";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kDatasetNotInstalled: return "dataset_not_installed";
    case ErrorCode::kDatasetNotFound: return "dataset_not_found";
    case ErrorCode::kUploadTooLarge: return "upload_too_large";
    case ErrorCode::kEndpointUnavailable: return "endpoint_unavailable";
    case ErrorCode::kResponseMalformed: return "response_malformed";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kJudgeUnavailable: return "judge_unavailable";
    case ErrorCode::kUnparseableOutput: return "unparseable_output";
    case ErrorCode::kNoJudgesAvailable: return "no_judges_available";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kNoGroundTruth: return "no_ground_truth";
    case ErrorCode::kRunNotFound: return "run_not_found";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kAlreadyRunning: return "already_running";
    case ErrorCode::kAlreadyFinished: return "already_finished";
    case ErrorCode::kUnauthorized: return "unauthorized";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kIoError: return "io_error";
  }
  return "unknown";
}

int ErrorHttpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRunNotFound:
    case ErrorCode::kDatasetNotFound:
    case ErrorCode::kDatasetNotInstalled:
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kAlreadyRunning:
    case ErrorCode::kAlreadyFinished:
      return 409;
    case ErrorCode::kUploadTooLarge:
      return 413;
    case ErrorCode::kUnauthorized:
      return 401;
    case ErrorCode::kEndpointUnavailable:
    case ErrorCode::kJudgeUnavailable:
    case ErrorCode::kNoJudgesAvailable:
    case ErrorCode::kTimeout:
      return 502;
    case ErrorCode::kIoError:
      return 500;
    default:
      return 400;
  }
}

}  // namespace trusteval
