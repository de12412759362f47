#include "fleetopt/mmo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <doctest.h>

#include "fleetopt/fleet_eval.hpp"
#include "support/oracles.hpp"

using namespace fleetopt;

namespace {

Technique bowl_technique(const std::string& id = "tuning") {
  Technique t;
  t.id = id;
  t.space.dims = {
      Dim{"rate", ContinuousDim{0.0, 1.0}},
      Dim{"scale", ContinuousDim{0.0, 1.0}},
  };
  return t;
}

Fleet plain_fleet(int n, double baseline = 0.5) {
  std::vector<ModelDescriptor> models;
  for (int i = 0; i < n; ++i) {
    ModelDescriptor d;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "m%02d", i);
    d.id = buf;
    d.baseline_performance = baseline;
    models.push_back(d);
  }
  return Fleet{models};
}

// All models share the optimum (0.6, 0.3) with peak 0.02; curvatures vary.
SyntheticEvaluator shared_bowl_evaluator(const Fleet& fleet,
                                         const Technique& tech,
                                         double noise = 0.0) {
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  double curv = 0.04;
  for (const auto& md : fleet.models()) {
    responses[tech.id][md.id] = {0.02, {curv, curv * 1.5}, {0.6, 0.3}};
    curv += 0.01;
  }
  return SyntheticEvaluator(fleet, {{tech.id, tech}}, responses,
                            {{tech.id, noise}}, 7);
}

MmoConfig small_config(std::uint64_t seed, int iterations,
                       int design_size = 0) {
  MmoConfig cfg;
  cfg.iterations_per_technique = iterations;
  cfg.seed = seed;
  cfg.acquisition.initial_design_size = design_size;
  cfg.acquisition.candidate_pool = 256;
  cfg.acquisition.mc_samples = 128;
  return cfg;
}

bool same_aggregate(const AggregateResult& a, const AggregateResult& b) {
  return a.weighted_mean == b.weighted_mean &&
         a.regression_rate == b.regression_rate && a.epsilon == b.epsilon &&
         a.feasible == b.feasible && a.aggregate == b.aggregate;
}

bool same_record(const TrialRecord& a, const TrialRecord& b) {
  if (a.technique_id != b.technique_id || a.iteration != b.iteration ||
      !(a.config == b.config) || a.seed != b.seed || a.repeats != b.repeats ||
      a.valid != b.valid || a.failures != b.failures) {
    return false;
  }
  if (a.per_model.size() != b.per_model.size()) return false;
  for (const auto& [id, out] : a.per_model) {
    const auto it = b.per_model.find(id);
    if (it == b.per_model.end()) return false;
    if (out.performance != it->second.performance ||
        out.delta != it->second.delta ||
        out.repeat_variance != it->second.repeat_variance) {
      return false;
    }
  }
  return same_aggregate(a.aggregate, b.aggregate);
}

}  // namespace

TEST_CASE("config validation rejects degenerate settings") {
  MmoConfig cfg;
  cfg.evaluation_repeats = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = MmoConfig{};
  cfg.iterations_per_technique = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);

  // Iteration budget below the initial design is rejected per technique.
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(3);
  auto ev = shared_bowl_evaluator(fleet, tech);
  MmoConfig tight = small_config(1, 4);  // design would need max(5, 4) = 5
  try {
    run_mmo({tech}, fleet, ev, tight);
    FAIL("expected invalid_configuration");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_configuration);
  }
}

TEST_CASE("evaluation count is iterations x representatives x repeats") {
  Technique a = bowl_technique("a");
  Technique b = bowl_technique("b");
  const Fleet fleet = plain_fleet(10);
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  for (const auto& md : fleet.models()) {
    responses["a"][md.id] = {0.02, {0.05, 0.05}, {0.5, 0.5}};
    responses["b"][md.id] = {0.01, {0.05, 0.05}, {0.2, 0.8}};
  }
  SyntheticEvaluator ev(fleet, {{"a", a}, {"b", b}}, responses, {}, 3);

  MmoConfig cfg = small_config(11, 5, /*design_size=*/5);
  const MmoReport report = run_mmo({a, b}, fleet, ev, cfg);
  CHECK(report.evaluation_count == 100);  // 2 techniques x 5 x 10 x 1
  CHECK(report.trial_log.size() == 10);

  cfg.evaluation_repeats = 3;
  const MmoReport rep3 = run_mmo({a, b}, fleet, ev, cfg);
  CHECK(rep3.evaluation_count == 300);

  // The same number recomputed from the raw log.
  const CostSummary cost = iteration_cost_summary(rep3, 200, 2);
  CHECK(cost.template_evaluations == rep3.evaluation_count);
  CHECK(cost.model_instantiations == 200);
  CHECK(cost.fragmented_bound == 800);
}

TEST_CASE("cost summary closed forms") {
  MmoReport empty;
  const CostSummary none = iteration_cost_summary(empty, 200, 0);
  CHECK(none.template_evaluations == 0);
  CHECK(none.model_instantiations == 200);
  CHECK(none.fragmented_bound == 200);  // 2^0 combinations

  const CostSummary three = iteration_cost_summary(empty, 200, 3);
  CHECK(three.fragmented_bound == 1600);
  CHECK_THROWS_AS(iteration_cost_summary(empty, -1, 0), Error);
  CHECK_THROWS_AS(iteration_cost_summary(empty, 1, 63), Error);
}

TEST_CASE("runs are deterministic given the seed") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(5);
  auto ev1 = shared_bowl_evaluator(fleet, tech, 0.002);
  auto ev2 = shared_bowl_evaluator(fleet, tech, 0.002);
  const MmoConfig cfg = small_config(21, 14);

  const MmoReport a = run_mmo({tech}, fleet, ev1, cfg);
  const MmoReport b = run_mmo({tech}, fleet, ev2, cfg);
  REQUIRE(a.trial_log.size() == b.trial_log.size());
  for (std::size_t i = 0; i < a.trial_log.size(); ++i) {
    CHECK(same_record(a.trial_log[i], b.trial_log[i]));
  }
  REQUIRE(a.generalized.size() == b.generalized.size());
  for (std::size_t i = 0; i < a.generalized.size(); ++i) {
    CHECK(a.generalized[i].technique_id == b.generalized[i].technique_id);
    CHECK(a.generalized[i].optimal_config == b.generalized[i].optimal_config);
    CHECK(a.generalized[i].optimal_performance ==
          b.generalized[i].optimal_performance);
  }

  MmoConfig other = cfg;
  other.seed = 22;
  const MmoReport c = run_mmo({tech}, fleet, ev1, other);
  bool any_diff = false;
  for (std::size_t i = 0; i < std::min(a.trial_log.size(), c.trial_log.size()); ++i) {
    if (!(a.trial_log[i].config == c.trial_log[i].config)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("optimizer approaches the grid oracle on a shared bowl") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(6);
  auto ev = shared_bowl_evaluator(fleet, tech);
  const Thresholds th;

  const GridOracleResult oracle =
      grid_oracle(ev, tech, fleet, th, 51, /*include_table=*/false);
  REQUIRE(oracle.found_feasible);

  const MmoConfig cfg = small_config(5, 30);
  const MmoReport report = run_mmo({tech}, fleet, ev, cfg);
  REQUIRE(report.generalized.size() == 1);
  const double got = report.generalized[0].optimal_performance;
  CHECK(got >= 0.9 * *oracle.best.aggregate);
  CHECK(got <= *oracle.best.aggregate + 1e-12);  // grid is near-exhaustive here
}

TEST_CASE("theta-star is a visited trial attaining the log maximum") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(5);
  auto ev = shared_bowl_evaluator(fleet, tech, 0.001);
  const MmoReport report = run_mmo({tech}, fleet, ev, small_config(9, 16));

  REQUIRE(report.generalized.size() == 1);
  const auto& g = report.generalized[0];
  double best = -1e300;
  bool visited = false;
  for (const auto& rec : report.trial_log) {
    if (rec.valid && rec.aggregate.feasible) {
      best = std::max(best, *rec.aggregate.aggregate);
    }
    if (rec.config == g.optimal_config) visited = true;
  }
  CHECK(visited);
  CHECK(g.optimal_performance == best);
  CHECK(g.optimal_performance >= Thresholds{}.tau);
  CHECK(report.trial_log[static_cast<std::size_t>(g.best_iteration)].config ==
        g.optimal_config);
}

TEST_CASE("technique infeasible everywhere is rejected with that reason") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(10);
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  for (int i = 0; i < 10; ++i) {
    const std::string id = fleet.models()[static_cast<std::size_t>(i)].id;
    if (i < 3) {
      // Peak well below -alpha: these three regress at every theta.
      responses["tuning"][id] = {-0.01, {0.02, 0.02}, {0.5, 0.5}};
    } else {
      responses["tuning"][id] = {0.02, {0.05, 0.05}, {0.5, 0.5}};
    }
  }
  SyntheticEvaluator ev(fleet, {{"tuning", tech}}, responses, {}, 2);

  const MmoReport report = run_mmo({tech}, fleet, ev, small_config(3, 12));
  CHECK(report.generalized.empty());
  REQUIRE(report.rejected.size() == 1);
  CHECK(report.rejected[0].technique_id == "tuning");
  CHECK(report.rejected[0].reason == RejectionReason::infeasible_everywhere);
  for (const auto& rec : report.trial_log) {
    CHECK(rec.aggregate.regression_rate >= 0.3);
    CHECK_FALSE(rec.aggregate.feasible);
  }
}

TEST_CASE("feasible but sub-tau technique is rejected as below tau") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(6);
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  for (const auto& md : fleet.models()) {
    // Peak 0.0003 < tau = 0.0005; shallow enough that nothing regresses.
    responses["tuning"][md.id] = {0.0003, {0.00005, 0.00005}, {0.5, 0.5}};
  }
  SyntheticEvaluator ev(fleet, {{"tuning", tech}}, responses, {}, 2);

  const MmoReport report = run_mmo({tech}, fleet, ev, small_config(4, 12));
  CHECK(report.generalized.empty());
  REQUIRE(report.rejected.size() == 1);
  CHECK(report.rejected[0].reason == RejectionReason::below_tau);

  double best = -1e300;
  for (const auto& rec : report.trial_log) {
    CHECK(rec.aggregate.feasible);
    best = std::max(best, *rec.aggregate.aggregate);
  }
  CHECK(best < Thresholds{}.tau);
  CHECK(best > 0.0);
}

namespace {

// Fails every evaluation for one model inside one trial window.
class FlakyEvaluator final : public Evaluator {
 public:
  FlakyEvaluator(SyntheticEvaluator& inner, std::string model_id,
                 int fail_from_call, int fail_to_call)
      : inner_(inner),
        model_id_(std::move(model_id)),
        from_(fail_from_call),
        to_(fail_to_call) {}

  double evaluate(const std::string& model_id, const std::string& technique_id,
                  const Configuration& config, int repeat_index) override {
    const int call = calls_++;
    if (model_id == model_id_ && call >= from_ && call < to_) {
      raise(Errc::evaluator_failure, "injected failure");
    }
    return inner_.evaluate(model_id, technique_id, config, repeat_index);
  }

  int calls() const { return calls_; }

 private:
  SyntheticEvaluator& inner_;
  std::string model_id_;
  int from_;
  int to_;
  int calls_ = 0;
};

}  // namespace

TEST_CASE("evaluator failures invalidate the trial but not the run") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(5);
  auto inner = shared_bowl_evaluator(fleet, tech);
  // Trial 2 occupies calls [10, 15) with 5 models and 1 repeat.
  FlakyEvaluator flaky(inner, "m03", 10, 15);

  const MmoConfig cfg = small_config(13, 12);
  const MmoReport report = run_mmo({tech}, fleet, flaky, cfg);

  REQUIRE(report.trial_log.size() == 12);
  const TrialRecord& bad = report.trial_log[2];
  CHECK_FALSE(bad.valid);
  CHECK(bad.failures.count("m03") == 1);
  CHECK(bad.per_model.size() + bad.failures.size() == fleet.size());
  CHECK_FALSE(bad.aggregate.feasible);

  for (std::size_t i = 0; i < report.trial_log.size(); ++i) {
    if (i != 2) CHECK(report.trial_log[i].valid);
  }
  // The failed trial cannot be theta*.
  REQUIRE(report.generalized.size() == 1);
  CHECK(report.generalized[0].best_iteration != 2);
  // The budget accounting treats the failed slots as consumed.
  CHECK(report.evaluation_count == 12 * 5);
}

TEST_CASE("per-model outcomes average over repeats") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(3);
  auto ev = shared_bowl_evaluator(fleet, tech, 0.01);

  MmoConfig cfg = small_config(17, 5, /*design_size=*/5);
  cfg.evaluation_repeats = 4;
  const MmoReport report = run_mmo({tech}, fleet, ev, cfg);

  for (const auto& rec : report.trial_log) {
    for (const auto& [id, out] : rec.per_model) {
      double sum = 0.0;
      double sq = 0.0;
      for (int r = 0; r < 4; ++r) {
        const double p = ev.evaluate(id, tech.id, rec.config, r);
        sum += p;
        sq += p * p;
      }
      const double mean = sum / 4.0;
      CHECK(out.performance == mean);
      CHECK(out.delta == mean - fleet.by_id(id).baseline_performance);
      CHECK(out.repeat_variance ==
            doctest::Approx(sq / 4.0 - mean * mean).epsilon(1e-12));
      CHECK(out.repeat_variance >= 0.0);
    }
    CHECK(rec.repeats == 4);
  }
}

TEST_CASE("resume reproduces the uninterrupted run exactly") {
  Technique a = bowl_technique("a");
  Technique b = bowl_technique("b");
  const Fleet fleet = plain_fleet(4);
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  double curv = 0.03;
  for (const auto& md : fleet.models()) {
    responses["a"][md.id] = {0.02, {curv, curv}, {0.6, 0.3}};
    responses["b"][md.id] = {0.015, {curv * 2, curv}, {0.25, 0.75}};
    curv += 0.008;
  }
  SyntheticEvaluator ev(fleet, {{"a", a}, {"b", b}}, responses,
                        {{"a", 0.004}, {"b", 0.004}}, 19);

  const MmoConfig cfg = small_config(23, 13);
  const MmoReport full = run_mmo({a, b}, fleet, ev, cfg);
  REQUIRE(full.trial_log.size() == 26);

  // Interrupt mid-way through the second technique.
  for (const std::size_t cut : {4UL, 13UL, 19UL, 26UL}) {
    const std::vector<TrialRecord> prefix(full.trial_log.begin(),
                                          full.trial_log.begin() +
                                              static_cast<long>(cut));
    const MmoReport resumed = run_mmo({a, b}, fleet, ev, cfg, &prefix);
    REQUIRE(resumed.trial_log.size() == full.trial_log.size());
    for (std::size_t i = 0; i < full.trial_log.size(); ++i) {
      CHECK(same_record(full.trial_log[i], resumed.trial_log[i]));
    }
    CHECK(resumed.evaluation_count == full.evaluation_count);
    REQUIRE(resumed.generalized.size() == full.generalized.size());
    for (std::size_t i = 0; i < full.generalized.size(); ++i) {
      CHECK(resumed.generalized[i].optimal_config ==
            full.generalized[i].optimal_config);
      CHECK(resumed.generalized[i].optimal_performance ==
            full.generalized[i].optimal_performance);
    }
  }

  // Corrupted resume data is rejected.
  std::vector<TrialRecord> gap = {full.trial_log[0], full.trial_log[2]};
  CHECK_THROWS_AS(run_mmo({a, b}, fleet, ev, cfg, &gap), Error);
  std::vector<TrialRecord> alien = {full.trial_log[0]};
  alien[0].technique_id = "ghost";
  CHECK_THROWS_AS(run_mmo({a, b}, fleet, ev, cfg, &alien), Error);
}

TEST_CASE("replaying a log recomputes identical aggregates") {
  const Technique tech = bowl_technique();
  const Fleet fleet = plain_fleet(6);
  auto ev = shared_bowl_evaluator(fleet, tech, 0.003);
  const MmoReport report = run_mmo({tech}, fleet, ev, small_config(29, 12));

  const auto replayed = replay_trials(report.trial_log, fleet, Thresholds{});
  REQUIRE(replayed.size() == report.trial_log.size());
  for (std::size_t i = 0; i < replayed.size(); ++i) {
    CHECK(same_record(report.trial_log[i], replayed[i]));
  }
}

TEST_CASE("holdout validation evaluates theta-star without mutating it") {
  const Technique tech = bowl_technique();
  const Fleet reps = plain_fleet(6);
  auto ev = shared_bowl_evaluator(reps, tech);
  const MmoReport report = run_mmo({tech}, reps, ev, small_config(31, 18));
  REQUIRE(report.generalized.size() == 1);

  // Holdout drawn from the same family: shares the optimum, so it transfers.
  std::vector<ModelDescriptor> hold_models;
  for (int i = 0; i < 4; ++i) {
    ModelDescriptor d;
    d.id = "h" + std::to_string(i);
    d.baseline_performance = 0.45;
    hold_models.push_back(d);
  }
  const Fleet holdout{hold_models};
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  std::map<std::string, std::map<std::string, QuadraticResponse>> inverted;
  for (const auto& md : holdout.models()) {
    responses["tuning"][md.id] = {0.018, {0.05, 0.06}, {0.6, 0.3}};
    inverted["tuning"][md.id] = {-0.018, {-0.05, -0.06}, {0.6, 0.3}};
  }
  SyntheticEvaluator hold_ev(holdout, {{"tuning", tech}}, responses, {}, 3);
  SyntheticEvaluator anti_ev(holdout, {{"tuning", tech}}, inverted, {}, 3);

  const HoldoutReport hr =
      validate_holdout(report.generalized, holdout, hold_ev, Thresholds{});
  REQUIRE(hr.entries.size() == 1);
  CHECK(hr.entries[0].config == report.generalized[0].optimal_config);
  CHECK(hr.entries[0].transfer);
  CHECK(hr.entries[0].per_model_delta.size() == 4);
  CHECK(hr.entries[0].aggregate.feasible);

  // Anti-correlated responses: the same theta* now regresses everywhere.
  const HoldoutReport anti =
      validate_holdout(report.generalized, holdout, anti_ev, Thresholds{});
  REQUIRE(anti.entries.size() == 1);
  CHECK_FALSE(anti.entries[0].transfer);

  // Empty generalized set: empty report.
  CHECK(validate_holdout({}, holdout, hold_ev, Thresholds{}).entries.empty());

  // A model the evaluator cannot score is recorded, not fatal.
  std::vector<ModelDescriptor> extended = hold_models;
  ModelDescriptor ghost;
  ghost.id = "zz_ghost";
  ghost.baseline_performance = 0.45;
  extended.push_back(ghost);
  const Fleet with_ghost{extended};
  const HoldoutReport partial =
      validate_holdout(report.generalized, with_ghost, hold_ev, Thresholds{});
  REQUIRE(partial.entries.size() == 1);
  CHECK(partial.entries[0].failures.count("zz_ghost") == 1);
  CHECK(partial.entries[0].per_model_delta.size() == 4);
  CHECK(partial.entries[0].transfer);
}
