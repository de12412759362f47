#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "fleetopt/mmo.hpp"
#include "fleetopt/representative.hpp"
#include "fleetopt/sensitivity.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

using Json = nlohmann::json;

// Key-sorted single-line JSON with non-finite numbers rejected. Everything
// hashed, diffed or replayed goes through this one function.
std::string canonical_dump(const Json& j);
std::uint64_t canonical_hash(const Json& j);

// Parse with position reporting ("line L, column C").
Json parse_json(const std::string& text);
Json load_json_file(const std::string& path);

// Write-then-rename so readers never observe a half-written artifact.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Strict object access: every key must be consumed, unknown keys are fatal.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string context);
  const Json& require(const std::string& key);
  const Json* optional(const std::string& key);
  void finish() const;  // raises on unconsumed keys

 private:
  const Json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

// Typed accessors; mismatches raise a validation error naming the context.
double as_double(const Json& j, const std::string& ctx);
std::int64_t as_i64(const Json& j, const std::string& ctx);
int as_int(const Json& j, const std::string& ctx);
std::uint64_t as_u64(const Json& j, const std::string& ctx);
bool as_bool(const Json& j, const std::string& ctx);
std::string as_string(const Json& j, const std::string& ctx);

Json to_json(const ConfigValue& v);
ConfigValue config_value_from_json(const Json& j, const std::string& context);

Json to_json(const Configuration& c);
Configuration configuration_from_json(const Json& j);

Json to_json(const Dim& d);
Dim dim_from_json(const Json& j);

Json to_json(const HyperparameterSpace& s);
HyperparameterSpace space_from_json(const Json& j);

Json to_json(const Technique& t);
Technique technique_from_json(const Json& j);

Json to_json(const ModelDescriptor& m);
ModelDescriptor model_from_json(const Json& j);

Json to_json(const Fleet& f);
Fleet fleet_from_json(const Json& j);

Json to_json(const Thresholds& t);
Thresholds thresholds_from_json(const Json& j);

Json to_json(const AggregateResult& a);
AggregateResult aggregate_result_from_json(const Json& j);

Json to_json(const TrialRecord& t);
TrialRecord trial_record_from_json(const Json& j);

Json to_json(const GeneralizedTechnique& g);
GeneralizedTechnique generalized_from_json(const Json& j);

// Report bodies exclude the trial log; trials.jsonl is the log's home.
Json to_json(const MmoReport& r);
MmoReport mmo_report_from_json(const Json& j);

Json to_json(const SensitivityReport& r);
SensitivityReport sensitivity_report_from_json(const Json& j);

Json to_json(const RepresentativeSet& r);
RepresentativeSet representative_set_from_json(const Json& j);

Json to_json(const HoldoutReport& r);
HoldoutReport holdout_report_from_json(const Json& j);

// Trial logs: one record per line, independently parseable.
std::string trial_log_to_jsonl(const std::vector<TrialRecord>& log);
std::vector<TrialRecord> trial_log_from_jsonl(const std::string& text);

}  // namespace fleetopt
