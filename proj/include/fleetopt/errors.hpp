#pragma once

#include <stdexcept>
#include <string>

namespace fleetopt {

// Stable error codes. Every failure raised by the library carries one of
// these so callers (and the CLI) can branch without parsing messages.
enum class Errc {
  all_zero_weights,
  negative_weight,
  non_finite,
  empty_fleet,
  length_mismatch,
  unnormalized_weights,
  invalid_configuration,
  degenerate_fleet,
  invalid_k,
  range_too_narrow,
  no_non_representatives,
  insufficient_feasible_trials,
  singular_gram,
  rank_deficient,
  too_few_feasible_trials,
  dim_coverage_gap,
  duplicate_technique,
  override_on_standardized_dim,
  override_out_of_bounds,
  stale_parent,
  unknown_model,
  unknown_technique,
  unknown_version,
  external_command_failed,
  invalid_spec,
  grid_too_large,
  no_feasible_point,
  evaluator_failure,
  parse_error,
  validation_error,
  missing_artifact,
  invalid_argument,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fleetopt
