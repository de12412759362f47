#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fleetopt/types.hpp"

namespace fleetopt {

// Outcome of scoring one candidate configuration across a fleet.
// `aggregate` is set only when the regression-rate constraint holds; an
// infeasible candidate carries no aggregate value at all rather than a
// floating-point -inf sentinel.
struct AggregateResult {
  double weighted_mean = 0.0;
  double regression_rate = 0.0;
  double epsilon = 0.0;  // constraint level this result was scored under
  bool feasible = false;
  std::optional<double> aggregate;
};

// Relative performance delta of a treatment measurement against a baseline.
double performance_delta(double p_treatment, double p_baseline);

// Fraction of models whose delta falls strictly below -alpha.
double regression_rate(const std::vector<double>& deltas, double alpha);

// Weighted mean of deltas; weights must already be normalized (sum 1).
double weighted_mean(const std::vector<double>& deltas,
                     const std::vector<double>& weights);

// Full scoring: weighted mean + regression rate + feasibility under
// thresholds.epsilon (rate <= epsilon is feasible, boundary included).
AggregateResult aggregate_delta(const std::vector<double>& deltas,
                                const std::vector<double>& weights,
                                const Thresholds& thresholds);

struct GeneralizedTechnique {
  std::string technique_id;
  Configuration optimal_config;
  double optimal_performance = 0.0;  // feasible aggregate at the optimum
  AggregateResult best;              // full scoring at the optimum
  int best_iteration = -1;           // trial index that produced it, if known
};

// Admission over per-technique optima: keep techniques whose best feasible
// aggregate reaches tau (boundary admitted). Entries with an infeasible
// result are dropped. Output is sorted by technique id.
std::vector<GeneralizedTechnique> select_generalized(
    const std::map<std::string, std::pair<Configuration, AggregateResult>>&
        best_per_technique,
    double tau);

}  // namespace fleetopt
