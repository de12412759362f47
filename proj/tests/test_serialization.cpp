#include <doctest.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fleetopt/fleet_eval.hpp"
#include "fleetopt/mmo.hpp"
#include "fleetopt/serialization.hpp"
#include "support/tempdir.hpp"

using namespace fleetopt;

namespace {

// Round-trip identity via the canonical form: if the parsed object
// serializes to the same bytes, nothing was lost or reordered.
template <typename T, typename FromJson>
void check_roundtrip(const T& value, FromJson from) {
  const std::string once = canonical_dump(to_json(value));
  const T back = from(parse_json(once));
  CHECK(canonical_dump(to_json(back)) == once);
}

HyperparameterSpace mixed_space() {
  HyperparameterSpace space;
  space.dims.push_back({"rate", ContinuousDim{0.001, 0.9}});
  space.dims.push_back({"depth", IntegerDim{1, 12}});
  space.dims.push_back({"mode", CategoricalDim{{"a", "b", "c"}}});
  return space;
}

Configuration mixed_config() {
  Configuration c;
  c.values = {ConfigValue{0.25}, ConfigValue{std::int64_t{7}},
              ConfigValue{std::string{"b"}}};
  return c;
}

}  // namespace

TEST_CASE("canonical dump sorts keys and is idempotent") {
  Json j;
  j["zulu"] = 1;
  j["alpha"] = Json{{"y", 2}, {"x", 3}};
  j["mid"] = Json::array({1, 2, 3});
  const std::string dumped = canonical_dump(j);
  CHECK(dumped.find("\"alpha\"") < dumped.find("\"mid\""));
  CHECK(dumped.find("\"mid\"") < dumped.find("\"zulu\""));
  CHECK(dumped.find("\"x\"") < dumped.find("\"y\""));
  CHECK(dumped.find('\n') == std::string::npos);
  CHECK(canonical_dump(parse_json(dumped)) == dumped);
}

TEST_CASE("canonical dump rejects non-finite numbers") {
  Json j;
  j["ok"] = 1.5;
  j["bad"] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(canonical_dump(j), doctest::Contains("bad"), Error);
  j["bad"] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(canonical_dump(j), Error);
  Json nested = Json::array({1.0, Json{{"deep", -std::numeric_limits<double>::infinity()}}});
  CHECK_THROWS_WITH_AS(canonical_dump(nested), doctest::Contains("deep"), Error);
}

TEST_CASE("parse errors carry line and column") {
  try {
    parse_json("{\"a\": 1,\n  bad}\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("unknown keys are fatal and named") {
  const Json j = parse_json(R"({"alpha": 0.1, "epsilonn": 0.2})");
  try {
    thresholds_from_json(j);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::validation_error);
    CHECK(std::string(e.what()).find("epsilonn") != std::string::npos);
  }
}

TEST_CASE("thresholds apply defaults for omitted keys") {
  const Thresholds t = thresholds_from_json(parse_json("{}"));
  CHECK(t.alpha == 0.0005);
  CHECK(t.epsilon == 0.1);
  CHECK(t.tau == 0.0005);
  const Thresholds u = thresholds_from_json(parse_json(R"({"epsilon": 0.05})"));
  CHECK(u.epsilon == 0.05);
  CHECK(u.alpha == 0.0005);
}

TEST_CASE("value and structure types round-trip") {
  check_roundtrip(mixed_config(), configuration_from_json);
  check_roundtrip(mixed_space(), space_from_json);

  Technique t;
  t.id = "quant";
  t.space = mixed_space();
  check_roundtrip(t, technique_from_json);

  ModelDescriptor m;
  m.id = "model_007";
  m.ranking_stage = RankingStage::pre_ranking;
  m.hardware = Hardware::mtia;
  m.optimization_event = "event_03";
  m.product_surface = "surface_01";
  m.data_constraint = DataConstraint::regional;
  m.flops = 2.5e9;
  m.baseline_performance = 0.61;
  m.weight = 2.0;
  check_roundtrip(m, model_from_json);

  Fleet fleet({m, [] {
                 ModelDescriptor n;
                 n.id = "model_008";
                 n.baseline_performance = 0.5;
                 n.weight = 1.0;
                 return n;
               }()});
  check_roundtrip(fleet, fleet_from_json);

  Thresholds th;
  th.alpha = 0.001;
  th.epsilon = 0.2;
  th.tau = 0.0;
  check_roundtrip(th, thresholds_from_json);
}

TEST_CASE("aggregate results round-trip in both feasibility states") {
  AggregateResult feasible;
  feasible.weighted_mean = 0.012;
  feasible.regression_rate = 0.05;
  feasible.epsilon = 0.1;
  feasible.feasible = true;
  feasible.aggregate = 0.012;
  check_roundtrip(feasible, aggregate_result_from_json);

  AggregateResult infeasible;
  infeasible.weighted_mean = -0.002;
  infeasible.regression_rate = 0.4;
  infeasible.epsilon = 0.1;
  infeasible.feasible = false;
  infeasible.aggregate = std::nullopt;
  check_roundtrip(infeasible, aggregate_result_from_json);
  CHECK(to_json(infeasible)["aggregate"].is_null());

  // feasible flag and aggregate presence must agree
  Json j = to_json(feasible);
  j["aggregate"] = nullptr;
  CHECK_THROWS_AS(aggregate_result_from_json(j), Error);
}

TEST_CASE("reports from a real optimization round-trip byte for byte") {
  SyntheticFleetSpec spec;
  spec.model_count = 5;
  spec.seed = 99;
  SyntheticTechniqueSpec tech_spec;
  tech_spec.global_center = {0.5, 0.5};
  tech_spec.center_spread = 0.1;
  spec.techniques["quant"] = tech_spec;

  std::map<std::string, Technique> techniques;
  Technique t;
  t.id = "quant";
  t.space.dims.push_back({"rate", ContinuousDim{0.0, 1.0}});
  t.space.dims.push_back({"scale", ContinuousDim{0.0, 1.0}});
  techniques["quant"] = t;

  auto [fleet, evaluator] = generate_synthetic_fleet(spec, techniques);
  std::vector<std::string> reps;
  for (const auto& m : fleet.models()) reps.push_back(m.id);

  MmoConfig config;
  config.iterations_per_technique = 8;
  config.seed = 7;
  config.acquisition.candidate_pool = 128;
  config.acquisition.mc_samples = 64;
  config.acquisition.initial_design_size = 5;

  const MmoReport report =
      run_mmo({t}, fleet.subset(reps), *evaluator, config);
  REQUIRE(report.trial_log.size() == 8);

  check_roundtrip(report, mmo_report_from_json);
  for (const auto& record : report.trial_log) {
    check_roundtrip(record, trial_record_from_json);
  }
  if (!report.generalized.empty()) {
    check_roundtrip(report.generalized.front(), generalized_from_json);
  }

  const std::string jsonl = trial_log_to_jsonl(report.trial_log);
  const std::vector<TrialRecord> back = trial_log_from_jsonl(jsonl);
  CHECK(trial_log_to_jsonl(back) == jsonl);
}

TEST_CASE("trial logs reject out-of-order iterations and name the line") {
  TrialRecord a;
  a.technique_id = "quant";
  a.iteration = 0;
  a.config = Configuration{{ConfigValue{0.5}}};
  a.aggregate.feasible = true;
  a.aggregate.aggregate = 0.0;
  TrialRecord b = a;
  b.iteration = 2;
  TrialRecord c = a;
  c.iteration = 1;

  const std::string good = trial_log_to_jsonl({a, c, b});
  CHECK(trial_log_from_jsonl(good).size() == 3);
  CHECK(trial_log_from_jsonl(good + "\n\n").size() == 3);

  const std::string bad = trial_log_to_jsonl({a, b, c});
  try {
    trial_log_from_jsonl(bad);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  // Interleaved techniques keep independent iteration counters.
  TrialRecord other = a;
  other.technique_id = "prune";
  CHECK(trial_log_from_jsonl(trial_log_to_jsonl({a, other, c})).size() == 3);
}

TEST_CASE("sensitivity and representative reports round-trip") {
  SensitivityReport report;
  report.intercept = 0.01;
  report.residual_norm = 1e-6;
  report.trials_used = 40;
  report.excluded_models.push_back({"model_003", "evaluator failed"});
  SensitivityEntry entry;
  entry.dim = "rate";
  entry.global_beta = 0.3;
  entry.per_model_betas = {{"model_001", 0.29}, {"model_002", 0.31}};
  entry.cross_model_variance = 1e-4;
  entry.decision = DimDecision::expose;
  report.entries.push_back(entry);
  entry.dim = "depth";
  entry.global_beta = 0.0;
  entry.decision = DimDecision::standardize;
  report.entries.push_back(entry);
  check_roundtrip(report, sensitivity_report_from_json);

  RepresentativeSet reps;
  reps.chosen_ids = {"model_001", "model_004"};
  reps.k = 2;
  reps.cluster_assignment = {{"model_001", 0}, {"model_002", 0}, {"model_004", 1}};
  reps.inertia_curve = {{1, 10.0}, {2, 2.5}, {3, 2.4}};
  check_roundtrip(reps, representative_set_from_json);

  HoldoutReport holdout;
  HoldoutEntry h;
  h.technique_id = "quant";
  h.config = mixed_config();
  h.aggregate.feasible = true;
  h.aggregate.aggregate = 0.01;
  h.aggregate.weighted_mean = 0.01;
  h.transfer = true;
  h.per_model_delta = {{"model_009", 0.011}};
  h.failures = {{"model_010", "timeout"}};
  holdout.entries.push_back(h);
  check_roundtrip(holdout, holdout_report_from_json);
}

TEST_CASE("atomic writes leave no temp file and survive reread") {
  testsupport::TempDir dir;
  const std::string path = (dir.path / "artifact.json").string();
  write_file_atomic(path, "{\"a\": 1}\n");
  CHECK(read_file(path) == "{\"a\": 1}\n");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  write_file_atomic(path, "{\"a\": 2}\n");
  CHECK(read_file(path) == "{\"a\": 2}\n");
  CHECK_THROWS_AS(read_file((dir.path / "absent.json").string()), Error);
}

TEST_CASE("canonical hash is stable and content-sensitive") {
  const Json a = parse_json(R"({"x": 1, "y": [1, 2]})");
  const Json b = parse_json(R"({"y": [1, 2], "x": 1})");
  const Json c = parse_json(R"({"x": 1, "y": [2, 1]})");
  CHECK(canonical_hash(a) == canonical_hash(b));
  CHECK(canonical_hash(a) != canonical_hash(c));
}
