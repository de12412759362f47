#include "fleetopt/mmo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fleetopt/rng.hpp"

namespace fleetopt {

void MmoConfig::validate() const {
  if (iterations_per_technique < 1) {
    raise(Errc::invalid_configuration, "iterations_per_technique must be >= 1");
  }
  if (evaluation_repeats < 1) {
    raise(Errc::invalid_configuration, "evaluation_repeats must be >= 1");
  }
  thresholds.validate();
  acquisition.validate();
}

std::string to_string(RejectionReason r) {
  return r == RejectionReason::infeasible_everywhere ? "infeasible-everywhere"
                                                     : "below-tau";
}

RejectionReason rejection_reason_from_string(const std::string& s) {
  if (s == "infeasible-everywhere") return RejectionReason::infeasible_everywhere;
  if (s == "below-tau") return RejectionReason::below_tau;
  raise(Errc::parse_error, "unknown rejection reason: " + s);
}

namespace {

// Marker aggregate for trials that never completed; inert because invalid
// trials are excluded from fitting and selection.
AggregateResult failed_aggregate(const Thresholds& th) {
  AggregateResult agg;
  agg.weighted_mean = 0.0;
  agg.regression_rate = 1.0;
  agg.epsilon = th.epsilon;
  agg.feasible = false;
  agg.aggregate.reset();
  return agg;
}

TrialRecord evaluate_trial(const Technique& technique, const Fleet& reps,
                           Evaluator& evaluator, const MmoConfig& config,
                           Configuration trial_config, int iteration,
                           std::uint64_t trial_seed) {
  TrialRecord rec;
  rec.technique_id = technique.id;
  rec.iteration = iteration;
  rec.config = std::move(trial_config);
  rec.seed = trial_seed;
  rec.repeats = config.evaluation_repeats;

  std::vector<double> deltas;
  deltas.reserve(reps.size());
  for (const auto& model : reps.models()) {
    double sum = 0.0;
    double sum_sq = 0.0;
    bool ok = true;
    for (int r = 0; r < config.evaluation_repeats && ok; ++r) {
      try {
        const double p =
            evaluator.evaluate(model.id, technique.id, rec.config, r);
        sum += p;
        sum_sq += p * p;
      } catch (const Error& e) {
        rec.failures[model.id] = e.what();
        rec.valid = false;
        ok = false;
      }
    }
    if (!ok) continue;
    const double n = static_cast<double>(config.evaluation_repeats);
    PerModelOutcome out;
    out.performance = sum / n;
    out.delta = performance_delta(out.performance, model.baseline_performance);
    out.repeat_variance =
        std::max(0.0, sum_sq / n - out.performance * out.performance);
    rec.per_model.emplace(model.id, out);
    deltas.push_back(out.delta);
  }

  if (rec.valid) {
    rec.aggregate =
        aggregate_delta(deltas, reps.normalized_weights(), config.thresholds);
  } else {
    rec.aggregate = failed_aggregate(config.thresholds);
  }
  return rec;
}

Configuration propose(const HyperparameterSpace& space,
                      const std::vector<std::pair<Configuration, AggregateResult>>& history,
                      const std::vector<std::pair<Configuration, bool>>& labels,
                      const AcquisitionSpec& acq, std::uint64_t tech_seed,
                      int iteration) {
  try {
    const SurrogateModel surrogate = fit_surrogate(
        history, space, derive_seed(tech_seed, "fit", iteration));
    double incumbent = -std::numeric_limits<double>::infinity();
    for (const auto& [cfg, agg] : history) {
      if (agg.feasible && *agg.aggregate > incumbent) incumbent = *agg.aggregate;
    }
    const FeasibilityModel feasibility(space, labels);
    return acquire(surrogate, feasibility, space, incumbent, acq,
                   derive_seed(tech_seed, "acquire", iteration));
  } catch (const Error& e) {
    // Too little feasible signal (or a degenerate kernel matrix) to guide the
    // search; fall back to a seeded uniform draw so the loop still advances.
    if (e.code() != Errc::insufficient_feasible_trials &&
        e.code() != Errc::singular_gram) {
      throw;
    }
    Rng rng(derive_seed(tech_seed, "fallback", iteration));
    std::vector<double> unit(space.dims.size());
    for (double& u : unit) u = rng.next_u01();
    return config_from_unit(space, unit);
  }
}

}  // namespace

MmoReport run_mmo(const std::vector<Technique>& techniques,
                  const Fleet& representatives, Evaluator& evaluator,
                  const MmoConfig& config,
                  const std::vector<TrialRecord>* resume_log) {
  config.validate();
  if (representatives.size() == 0) {
    raise(Errc::empty_fleet, "representative set is empty");
  }
  for (const auto& model : representatives.models()) model.validate();
  for (const auto& technique : techniques) {
    technique.space.validate();
    const int design = config.acquisition.resolved_initial_design(technique.space);
    if (config.iterations_per_technique < design) {
      raise(Errc::invalid_configuration,
            "technique " + technique.id + " needs at least " +
                std::to_string(design) + " iterations for its initial design");
    }
  }
  if (resume_log != nullptr) {
    for (const auto& rec : *resume_log) {
      const bool known = std::any_of(
          techniques.begin(), techniques.end(),
          [&](const Technique& t) { return t.id == rec.technique_id; });
      if (!known) {
        raise(Errc::validation_error,
              "resume log references unknown technique " + rec.technique_id);
      }
    }
  }

  MmoReport report;
  const int n_iters = config.iterations_per_technique;

  for (const auto& technique : techniques) {
    const std::uint64_t tech_seed = derive_seed(config.seed, "mmo", technique.id);
    const int n_design = config.acquisition.resolved_initial_design(technique.space);
    const std::vector<Configuration> design = initial_design(
        technique.space, n_design, derive_seed(tech_seed, "design"));

    std::vector<std::pair<Configuration, AggregateResult>> history;
    std::vector<std::pair<Configuration, bool>> labels;

    int start = 0;
    if (resume_log != nullptr) {
      for (const auto& rec : *resume_log) {
        if (rec.technique_id != technique.id) continue;
        if (rec.iteration != start) {
          raise(Errc::validation_error,
                "resume log for " + technique.id +
                    " is not a contiguous iteration sequence");
        }
        report.trial_log.push_back(rec);
        if (rec.valid) {
          history.emplace_back(rec.config, rec.aggregate);
          labels.emplace_back(rec.config, rec.aggregate.feasible);
        }
        ++start;
      }
      if (start > n_iters) {
        raise(Errc::validation_error,
              "resume log for " + technique.id + " exceeds the iteration budget");
      }
    }

    for (int t = start; t < n_iters; ++t) {
      Configuration trial_config =
          t < n_design ? design[static_cast<std::size_t>(t)]
                       : propose(technique.space, history, labels,
                                 config.acquisition, tech_seed, t);
      TrialRecord rec = evaluate_trial(technique, representatives, evaluator,
                                       config, std::move(trial_config), t,
                                       derive_seed(tech_seed, "trial", t));
      if (rec.valid) {
        history.emplace_back(rec.config, rec.aggregate);
        labels.emplace_back(rec.config, rec.aggregate.feasible);
      }
      report.trial_log.push_back(std::move(rec));
    }

    report.evaluation_count += static_cast<long long>(n_iters) *
                               static_cast<long long>(representatives.size()) *
                               config.evaluation_repeats;

    // theta*: best feasible aggregate among visited trials, earliest on ties.
    const TrialRecord* best = nullptr;
    for (const auto& rec : report.trial_log) {
      if (rec.technique_id != technique.id || !rec.valid || !rec.aggregate.feasible) {
        continue;
      }
      if (best == nullptr || *rec.aggregate.aggregate > *best->aggregate.aggregate) {
        best = &rec;
      }
    }
    if (best == nullptr) {
      report.rejected.push_back(
          {technique.id, RejectionReason::infeasible_everywhere,
           "regression rate exceeded epsilon at every visited configuration"});
    } else if (*best->aggregate.aggregate >= config.thresholds.tau) {
      GeneralizedTechnique g;
      g.technique_id = technique.id;
      g.optimal_config = best->config;
      g.optimal_performance = *best->aggregate.aggregate;
      g.best = best->aggregate;
      g.best_iteration = best->iteration;
      report.generalized.push_back(std::move(g));
    } else {
      report.rejected.push_back(
          {technique.id, RejectionReason::below_tau,
           "best feasible aggregate " + std::to_string(*best->aggregate.aggregate) +
               " is below tau"});
    }
  }
  return report;
}

std::vector<TrialRecord> replay_trials(const std::vector<TrialRecord>& log,
                                       const Fleet& representatives,
                                       const Thresholds& thresholds) {
  std::vector<TrialRecord> out;
  out.reserve(log.size());
  for (const auto& rec : log) {
    TrialRecord r = rec;
    if (!r.valid) {
      out.push_back(std::move(r));
      continue;
    }
    std::vector<double> deltas;
    deltas.reserve(representatives.size());
    for (const auto& model : representatives.models()) {
      const auto it = r.per_model.find(model.id);
      if (it == r.per_model.end()) {
        raise(Errc::validation_error,
              "trial " + std::to_string(r.iteration) + " of " + r.technique_id +
                  " lacks model " + model.id);
      }
      it->second.delta =
          performance_delta(it->second.performance, model.baseline_performance);
      deltas.push_back(it->second.delta);
    }
    if (r.per_model.size() != representatives.size()) {
      raise(Errc::validation_error,
            "trial log covers models outside the representative set");
    }
    r.aggregate =
        aggregate_delta(deltas, representatives.normalized_weights(), thresholds);
    out.push_back(std::move(r));
  }
  return out;
}

HoldoutReport validate_holdout(const std::vector<GeneralizedTechnique>& generalized,
                               const Fleet& holdout, Evaluator& evaluator,
                               const Thresholds& thresholds) {
  thresholds.validate();
  if (!generalized.empty() && holdout.size() == 0) {
    raise(Errc::empty_fleet, "holdout set is empty");
  }

  HoldoutReport report;
  for (const auto& g : generalized) {
    HoldoutEntry entry;
    entry.technique_id = g.technique_id;
    entry.config = g.optimal_config;

    std::vector<double> deltas;
    std::vector<double> raw_weights;
    for (const auto& model : holdout.models()) {
      try {
        const double p = evaluator.evaluate(model.id, g.technique_id, g.optimal_config, 0);
        const double d = performance_delta(p, model.baseline_performance);
        entry.per_model_delta[model.id] = d;
        deltas.push_back(d);
        raw_weights.push_back(model.weight);
      } catch (const Error& e) {
        entry.failures[model.id] = e.what();
      }
    }
    if (deltas.empty()) {
      entry.aggregate = failed_aggregate(thresholds);
      entry.transfer = false;
    } else {
      entry.aggregate =
          aggregate_delta(deltas, normalize_weights(raw_weights), thresholds);
      entry.transfer = entry.aggregate.feasible &&
                       *entry.aggregate.aggregate >= thresholds.tau;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

CostSummary iteration_cost_summary(const MmoReport& report, int fleet_size,
                                   int technique_count) {
  if (fleet_size < 0) raise(Errc::invalid_argument, "fleet_size must be >= 0");
  if (technique_count < 0 || technique_count > 62) {
    raise(Errc::invalid_argument, "technique_count must be in [0, 62]");
  }
  CostSummary s;
  for (const auto& rec : report.trial_log) {
    s.template_evaluations +=
        static_cast<long long>(rec.per_model.size() + rec.failures.size()) *
        rec.repeats;
  }
  s.model_instantiations = fleet_size;
  s.fragmented_bound = static_cast<long long>(fleet_size) *
                       (1LL << technique_count);
  return s;
}

}  // namespace fleetopt
