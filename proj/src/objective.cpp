#include "fleetopt/objective.hpp"

#include <cmath>

namespace fleetopt {

double performance_delta(double p_treatment, double p_baseline) {
  if (!std::isfinite(p_treatment) || !std::isfinite(p_baseline))
    raise(Errc::non_finite, "performance values must be finite");
  return p_treatment - p_baseline;
}

double regression_rate(const std::vector<double>& deltas, double alpha) {
  if (deltas.empty()) raise(Errc::empty_fleet, "no deltas to score");
  if (!std::isfinite(alpha)) raise(Errc::non_finite, "alpha is not finite");
  if (alpha < 0.0) raise(Errc::validation_error, "alpha must be >= 0");
  std::size_t regressed = 0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!std::isfinite(deltas[i]))
      raise(Errc::non_finite, "delta " + std::to_string(i) + " is not finite");
    // A model counts as regressed only when it loses strictly more than
    // alpha; a delta of exactly -alpha stays inside the tolerance.
    if (deltas[i] < -alpha) ++regressed;
  }
  return static_cast<double>(regressed) / static_cast<double>(deltas.size());
}

double weighted_mean(const std::vector<double>& deltas,
                     const std::vector<double>& weights) {
  if (deltas.empty()) raise(Errc::empty_fleet, "no deltas to average");
  if (deltas.size() != weights.size())
    raise(Errc::length_mismatch,
          std::to_string(deltas.size()) + " deltas vs " +
              std::to_string(weights.size()) + " weights");
  double sum = 0.0;
  double wsum = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!std::isfinite(deltas[i]))
      raise(Errc::non_finite, "delta " + std::to_string(i) + " is not finite");
    if (!std::isfinite(weights[i]))
      raise(Errc::non_finite, "weight " + std::to_string(i) + " is not finite");
    if (weights[i] < 0.0)
      raise(Errc::negative_weight, "weight " + std::to_string(i) + " is negative");
    sum += weights[i] * deltas[i];
    wsum += weights[i];
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    raise(Errc::unnormalized_weights,
          "weights sum to " + std::to_string(wsum) + ", expected 1");
  return sum;
}

AggregateResult aggregate_delta(const std::vector<double>& deltas,
                                const std::vector<double>& weights,
                                const Thresholds& thresholds) {
  thresholds.validate();
  AggregateResult r;
  r.weighted_mean = weighted_mean(deltas, weights);
  r.regression_rate = regression_rate(deltas, thresholds.alpha);
  r.epsilon = thresholds.epsilon;
  r.feasible = r.regression_rate <= thresholds.epsilon;
  if (r.feasible) r.aggregate = r.weighted_mean;
  return r;
}

std::vector<GeneralizedTechnique> select_generalized(
    const std::map<std::string, std::pair<Configuration, AggregateResult>>&
        best_per_technique,
    double tau) {
  if (!std::isfinite(tau)) raise(Errc::non_finite, "tau is not finite");
  std::vector<GeneralizedTechnique> out;
  for (const auto& [id, entry] : best_per_technique) {
    const AggregateResult& best = entry.second;
    if (!best.feasible || !best.aggregate.has_value()) continue;
    if (*best.aggregate >= tau)
      out.push_back({id, entry.first, *best.aggregate, best, -1});
  }
  return out;  // std::map iteration is already id-sorted
}

}  // namespace fleetopt
