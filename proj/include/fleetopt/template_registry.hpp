#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fleetopt/fleet_eval.hpp"
#include "fleetopt/objective.hpp"
#include "fleetopt/sensitivity.hpp"
#include "fleetopt/serialization.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

using DimBounds = std::variant<ContinuousDim, IntegerDim, CategoricalDim>;

struct FixedParam {
  std::string dim;
  ConfigValue value;  // theta* restricted to this standardized dim
};

struct ExposedParam {
  std::string technique_id;
  std::string dim;
  ConfigValue default_value;  // theta* value, the per-model starting point
  DimBounds bounds;
};

struct CommittedTechnique {
  std::string technique_id;
  HyperparameterSpace space;
  std::vector<FixedParam> fixed;  // in space dim order
};

// Immutable record in the registry's append-only history. Within each
// committed technique, fixed and exposed dims partition the space exactly.
struct TemplateVersion {
  int version_id = 0;           // 1-based, parent.version_id + 1
  std::optional<int> parent;
  std::vector<CommittedTechnique> committed;      // sorted by technique_id
  std::vector<ExposedParam> exposed_params;       // grouped per technique
  std::string mmo_report_ref;                     // provenance pointers
  std::string sensitivity_ref;
  std::string created_at;  // metadata only; empty unless a caller sets it
};

Json to_json(const TemplateVersion& v);
TemplateVersion template_version_from_json(const Json& j);

struct ModelInstance {
  std::string model_id;
  int template_version_id = 0;
  std::map<std::string, Configuration> resolved_configs;  // per technique
  std::string model_inputs;  // opaque payload, stored verbatim
};

Json to_json(const ModelInstance& m);

struct BacktestTechniqueResult {
  std::string technique_id;
  Configuration config;  // the version's resolved defaults
  std::map<std::string, double> per_model_delta;
  std::map<std::string, std::string> failures;
  AggregateResult aggregate;
  bool pass = false;
};

struct BacktestReport {
  std::vector<BacktestTechniqueResult> per_technique;
  // Per-model deltas summed across techniques; an accounting view, since
  // techniques are evaluated independently.
  AggregateResult total;
  bool pass = false;
};

Json to_json(const BacktestReport& r);
BacktestReport backtest_report_from_json(const Json& j);

struct ValueChange {
  std::string technique_id;
  std::string dim;
  ConfigValue from;
  ConfigValue to;
  bool exposed = false;  // change to an exposed default rather than a fixed value
};

struct ExposureChange {
  std::string technique_id;
  std::string dim;
  bool now_exposed = false;
};

struct VersionDiff {
  std::vector<std::string> added;    // technique ids present only in b
  std::vector<std::string> removed;  // present only in a
  std::vector<ValueChange> changed_values;
  std::vector<ExposureChange> exposure_changes;

  bool empty() const {
    return added.empty() && removed.empty() && changed_values.empty() &&
           exposure_changes.empty();
  }
};

Json to_json(const VersionDiff& d);

using TechniqueOverrides = std::map<std::string, std::map<std::string, ConfigValue>>;

// Append-only version store. Single writer: commits must name the current
// head as parent, so a commit racing against another writer's fails loudly
// instead of merging.
class TemplateRegistry {
 public:
  TemplateRegistry() = default;

  const std::vector<TemplateVersion>& versions() const { return versions_; }
  const TemplateVersion& version(int version_id) const;
  const TemplateVersion* head() const {
    return versions_.empty() ? nullptr : &versions_.back();
  }

  // parent_id: nullopt for the first commit, otherwise the current head's id.
  // fixed/exposed split follows each technique's sensitivity decisions; a
  // report with no entries standardizes everything. Techniques present in
  // the parent carry forward unless superseded by id here.
  const TemplateVersion& commit(
      std::optional<int> parent_id,
      const std::vector<GeneralizedTechnique>& generalized,
      const std::map<std::string, Technique>& technique_defs,
      const std::map<std::string, SensitivityReport>& sensitivity,
      const std::string& mmo_report_ref = "",
      const std::string& sensitivity_ref = "");

  ModelInstance instantiate(int version_id, const ModelDescriptor& model,
                            const TechniqueOverrides& overrides = {},
                            const std::string& model_inputs = "") const;

  BacktestReport backtest(int version_id, const Fleet& fleet,
                          Evaluator& evaluator,
                          const Thresholds& thresholds) const;

  static VersionDiff diff(const TemplateVersion& a, const TemplateVersion& b);

  void save(const std::string& path) const;
  static TemplateRegistry load(const std::string& path);

  std::uint64_t content_hash() const;

 private:
  std::vector<TemplateVersion> versions_;
};

}  // namespace fleetopt
