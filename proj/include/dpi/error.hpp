#pragma once

#include <stdexcept>
#include <string>

namespace dpi {

enum class ErrorCode {
  empty_signal,
  no_periodicity,
  harmonic_not_found,
  aliased_harmonic,
  silent_frame,
  degenerate_calibration,
  too_few_samples,
  zero_variance,
  insufficient_voicing,
  not_enough_days,
  window_search_exhausted,
  single_class,
  class_too_small,
  non_convergence,
  zero_pooled_std,
  degenerate_variance,
  constant_input,
  degenerate_input,
  not_reached,
  missing_condition,
  duplicate_subject,
  missing_day_index,
  unresolvable_path,
  unsupported_format,
  corrupt_header,
  schema_mismatch,
  schema_version_mismatch,
  parse_error,
  io_error,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::empty_signal: return "empty_signal";
    case ErrorCode::no_periodicity: return "no_periodicity";
    case ErrorCode::harmonic_not_found: return "harmonic_not_found";
    case ErrorCode::aliased_harmonic: return "aliased_harmonic";
    case ErrorCode::silent_frame: return "silent_frame";
    case ErrorCode::degenerate_calibration: return "degenerate_calibration";
    case ErrorCode::too_few_samples: return "too_few_samples";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::insufficient_voicing: return "insufficient_voicing";
    case ErrorCode::not_enough_days: return "not_enough_days";
    case ErrorCode::window_search_exhausted: return "window_search_exhausted";
    case ErrorCode::single_class: return "single_class";
    case ErrorCode::class_too_small: return "class_too_small";
    case ErrorCode::non_convergence: return "non_convergence";
    case ErrorCode::zero_pooled_std: return "zero_pooled_std";
    case ErrorCode::degenerate_variance: return "degenerate_variance";
    case ErrorCode::constant_input: return "constant_input";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::not_reached: return "not_reached";
    case ErrorCode::missing_condition: return "missing_condition";
    case ErrorCode::duplicate_subject: return "duplicate_subject";
    case ErrorCode::missing_day_index: return "missing_day_index";
    case ErrorCode::unresolvable_path: return "unresolvable_path";
    case ErrorCode::unsupported_format: return "unsupported_format";
    case ErrorCode::corrupt_header: return "corrupt_header";
    case ErrorCode::schema_mismatch: return "schema_mismatch";
    case ErrorCode::schema_version_mismatch: return "schema_version_mismatch";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

// Single exception type for the whole library; the code tells callers (and
// the CLI) which contract was violated without a parallel class hierarchy.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace dpi
