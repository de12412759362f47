#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fleetopt/bayesopt.hpp"
#include "fleetopt/fleet_eval.hpp"
#include "fleetopt/objective.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

struct MmoConfig {
  int iterations_per_technique = 50;  // total trials N, including the design
  Thresholds thresholds;
  std::uint64_t seed = 0;
  AcquisitionSpec acquisition;
  int evaluation_repeats = 1;  // averaged before the delta is taken

  void validate() const;
};

struct PerModelOutcome {
  double performance = 0.0;     // mean over repeats
  double delta = 0.0;           // performance - model baseline
  double repeat_variance = 0.0; // population variance across repeats, diagnostic
};

struct TrialRecord {
  std::string technique_id;
  int iteration = 0;
  Configuration config;
  // Together, per_model and failures cover exactly the representative set.
  std::map<std::string, PerModelOutcome> per_model;
  std::map<std::string, std::string> failures;
  AggregateResult aggregate;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // metadata only; never feeds any computation
  int repeats = 1;
  bool valid = true;  // false: an evaluation failed; excluded from selection
};

enum class RejectionReason { infeasible_everywhere, below_tau };

std::string to_string(RejectionReason r);
RejectionReason rejection_reason_from_string(const std::string& s);

struct RejectedTechnique {
  std::string technique_id;
  RejectionReason reason = RejectionReason::infeasible_everywhere;
  std::string detail;
};

struct MmoReport {
  std::vector<GeneralizedTechnique> generalized;
  std::vector<RejectedTechnique> rejected;
  std::vector<TrialRecord> trial_log;
  // Evaluation slots consumed by the loop: per technique,
  // iterations run x |representatives| x repeats.
  long long evaluation_count = 0;
};

// Sequential optimization of each technique over the representative fleet:
// seeded initial design, then expected-improvement proposals; every trial
// scores all representatives before the aggregate is formed. theta* is the
// argmax of the feasible aggregate over visited trials only. Deterministic
// given config.seed and a deterministic evaluator.
//
// `resume_log` replays previously persisted trials verbatim (no re-evaluation)
// and continues each technique at its next iteration; the finished report is
// identical to an uninterrupted run with the same seed.
MmoReport run_mmo(const std::vector<Technique>& techniques,
                  const Fleet& representatives, Evaluator& evaluator,
                  const MmoConfig& config,
                  const std::vector<TrialRecord>* resume_log = nullptr);

// Recomputes delta, rate, mean and feasibility for every valid record from
// its logged per-model performances. Bit-for-bit stability of this replay is
// what makes trial logs resumable.
std::vector<TrialRecord> replay_trials(const std::vector<TrialRecord>& log,
                                       const Fleet& representatives,
                                       const Thresholds& thresholds);

struct HoldoutEntry {
  std::string technique_id;
  Configuration config;  // theta*, unchanged
  AggregateResult aggregate;
  bool transfer = false;  // aggregate >= tau and rate <= epsilon
  std::map<std::string, double> per_model_delta;
  std::map<std::string, std::string> failures;
};

struct HoldoutReport {
  std::vector<HoldoutEntry> entries;
};

// Scores each generalized technique at its fixed theta* on every holdout
// model. Callers supply a holdout disjoint from the representatives; theta*
// is never mutated. Models whose evaluation fails are recorded and the
// aggregate is formed over the remainder with renormalized weights.
HoldoutReport validate_holdout(const std::vector<GeneralizedTechnique>& generalized,
                               const Fleet& holdout, Evaluator& evaluator,
                               const Thresholds& thresholds);

struct CostSummary {
  long long template_evaluations = 0;   // recomputed from the trial log
  long long model_instantiations = 0;   // one per fleet model
  long long fragmented_bound = 0;       // n * 2^k per-combination builds
};

// Pure arithmetic: the cost of template iteration versus the counterfactual
// of tuning every technique combination per model.
CostSummary iteration_cost_summary(const MmoReport& report, int fleet_size,
                                   int technique_count);

}  // namespace fleetopt
