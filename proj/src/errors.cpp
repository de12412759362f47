#include "fleetopt/errors.hpp"

namespace fleetopt {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::all_zero_weights: return "all_zero_weights";
    case Errc::negative_weight: return "negative_weight";
    case Errc::non_finite: return "non_finite";
    case Errc::empty_fleet: return "empty_fleet";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::unnormalized_weights: return "unnormalized_weights";
    case Errc::invalid_configuration: return "invalid_configuration";
    case Errc::degenerate_fleet: return "degenerate_fleet";
    case Errc::invalid_k: return "invalid_k";
    case Errc::range_too_narrow: return "range_too_narrow";
    case Errc::no_non_representatives: return "no_non_representatives";
    case Errc::insufficient_feasible_trials: return "insufficient_feasible_trials";
    case Errc::singular_gram: return "singular_gram";
    case Errc::rank_deficient: return "rank_deficient";
    case Errc::too_few_feasible_trials: return "too_few_feasible_trials";
    case Errc::dim_coverage_gap: return "dim_coverage_gap";
    case Errc::duplicate_technique: return "duplicate_technique";
    case Errc::override_on_standardized_dim: return "override_on_standardized_dim";
    case Errc::override_out_of_bounds: return "override_out_of_bounds";
    case Errc::stale_parent: return "stale_parent";
    case Errc::unknown_model: return "unknown_model";
    case Errc::unknown_technique: return "unknown_technique";
    case Errc::unknown_version: return "unknown_version";
    case Errc::external_command_failed: return "external_command_failed";
    case Errc::invalid_spec: return "invalid_spec";
    case Errc::grid_too_large: return "grid_too_large";
    case Errc::no_feasible_point: return "no_feasible_point";
    case Errc::evaluator_failure: return "evaluator_failure";
    case Errc::parse_error: return "parse_error";
    case Errc::validation_error: return "validation_error";
    case Errc::missing_artifact: return "missing_artifact";
    case Errc::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

}  // namespace fleetopt
