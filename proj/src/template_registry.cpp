#include "fleetopt/template_registry.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <string_view>

#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

Json bounds_to_json(const DimBounds& bounds) {
  Json j;
  if (const auto* c = std::get_if<ContinuousDim>(&bounds)) {
    j["type"] = "continuous";
    j["lo"] = c->lo;
    j["hi"] = c->hi;
  } else if (const auto* i = std::get_if<IntegerDim>(&bounds)) {
    j["type"] = "integer";
    j["lo"] = i->lo;
    j["hi"] = i->hi;
  } else {
    const auto& cat = std::get<CategoricalDim>(bounds);
    j["type"] = "categorical";
    j["values"] = cat.values;
  }
  return j;
}

DimBounds bounds_from_json(const Json& j) {
  ObjectReader reader(j, "bounds");
  const std::string type = as_string(reader.require("type"), "bounds.type");
  if (type == "continuous") {
    ContinuousDim c;
    c.lo = as_double(reader.require("lo"), "bounds.lo");
    c.hi = as_double(reader.require("hi"), "bounds.hi");
    reader.finish();
    return c;
  }
  if (type == "integer") {
    IntegerDim i;
    i.lo = as_i64(reader.require("lo"), "bounds.lo");
    i.hi = as_i64(reader.require("hi"), "bounds.hi");
    reader.finish();
    return i;
  }
  if (type == "categorical") {
    CategoricalDim c;
    const Json& values = reader.require("values");
    if (!values.is_array()) {
      raise(Errc::validation_error, "bounds.values must be an array");
    }
    for (const auto& v : values) {
      c.values.push_back(as_string(v, "bounds.values[]"));
    }
    reader.finish();
    return c;
  }
  raise(Errc::validation_error, "bounds.type '" + type + "' is not recognized");
}

// Empty string means the value fits; otherwise a short reason.
std::string check_value(const DimBounds& bounds, const ConfigValue& value) {
  std::ostringstream why;
  if (const auto* c = std::get_if<ContinuousDim>(&bounds)) {
    const double* d = std::get_if<double>(&value);
    if (!d) return "expects a real value";
    if (*d < c->lo || *d > c->hi) {
      why << "value " << *d << " lies outside [" << c->lo << ", " << c->hi << "]";
      return why.str();
    }
  } else if (const auto* i = std::get_if<IntegerDim>(&bounds)) {
    const std::int64_t* n = std::get_if<std::int64_t>(&value);
    if (!n) return "expects an integer value";
    if (*n < i->lo || *n > i->hi) {
      why << "value " << *n << " lies outside [" << i->lo << ", " << i->hi << "]";
      return why.str();
    }
  } else {
    const auto& cat = std::get<CategoricalDim>(bounds);
    const std::string* s = std::get_if<std::string>(&value);
    if (!s) return "expects a categorical value";
    if (std::find(cat.values.begin(), cat.values.end(), *s) ==
        cat.values.end()) {
      return "value '" + *s + "' is not an allowed level";
    }
  }
  return {};
}

bool same_bounds(const DimBounds& a, const DimBounds& b) {
  return canonical_dump(bounds_to_json(a)) == canonical_dump(bounds_to_json(b));
}

AggregateResult failed_aggregate(const Thresholds& thresholds) {
  AggregateResult r;
  r.weighted_mean = 0.0;
  r.regression_rate = 1.0;
  r.epsilon = thresholds.epsilon;
  r.feasible = false;
  r.aggregate = std::nullopt;
  return r;
}

// Exposed params of one technique, keyed by dim name.
std::map<std::string, const ExposedParam*> exposed_by_dim(
    const TemplateVersion& v, const std::string& technique_id) {
  std::map<std::string, const ExposedParam*> out;
  for (const auto& ep : v.exposed_params) {
    if (ep.technique_id == technique_id) out[ep.dim] = &ep;
  }
  return out;
}

// Fixed values and exposed defaults assembled positionally. The partition
// invariant guarantees every dim resolves exactly once.
Configuration resolve_defaults(const TemplateVersion& v,
                               const CommittedTechnique& ct) {
  std::map<std::string, ConfigValue> resolved;
  for (const auto& f : ct.fixed) resolved[f.dim] = f.value;
  for (const auto& ep : v.exposed_params) {
    if (ep.technique_id == ct.technique_id) resolved[ep.dim] = ep.default_value;
  }
  Configuration config;
  config.values.reserve(ct.space.dims.size());
  for (const auto& dim : ct.space.dims) {
    config.values.push_back(resolved.at(dim.name));
  }
  return config;
}

// Partition and consistency checks; run on commit and again on load so a
// hand-edited registry file cannot smuggle in an uncovered dim.
void validate_version(const TemplateVersion& v) {
  std::set<std::string> technique_ids;
  for (const auto& ct : v.committed) {
    if (!technique_ids.insert(ct.technique_id).second) {
      raise(Errc::duplicate_technique, "technique '" + ct.technique_id +
                                           "' committed twice in version " +
                                           std::to_string(v.version_id));
    }
    ct.space.validate();
    const std::string where =
        "version " + std::to_string(v.version_id) + ", technique '" +
        ct.technique_id + "'";
    std::map<std::string, const ExposedParam*> exposed =
        exposed_by_dim(v, ct.technique_id);
    std::set<std::string> covered;
    for (const auto& f : ct.fixed) {
      if (!ct.space.has_dim(f.dim)) {
        raise(Errc::validation_error,
              where + ": fixed param names unknown dim '" + f.dim + "'");
      }
      if (exposed.count(f.dim) || !covered.insert(f.dim).second) {
        raise(Errc::dim_coverage_gap,
              where + ": dim '" + f.dim + "' is covered more than once");
      }
      const Dim& dim = ct.space.dims[ct.space.dim_index(f.dim)];
      const std::string why = check_value(dim.kind, f.value);
      if (!why.empty()) {
        raise(Errc::validation_error,
              where + ": fixed value for dim '" + f.dim + "' " + why);
      }
    }
    for (const auto& [name, ep] : exposed) {
      if (!ct.space.has_dim(name)) {
        raise(Errc::validation_error,
              where + ": exposed param names unknown dim '" + name + "'");
      }
      if (!covered.insert(name).second) {
        raise(Errc::dim_coverage_gap,
              where + ": dim '" + name + "' is covered more than once");
      }
      const Dim& dim = ct.space.dims[ct.space.dim_index(name)];
      if (!same_bounds(dim.kind, ep->bounds)) {
        raise(Errc::validation_error,
              where + ": exposed bounds for dim '" + name +
                  "' disagree with the technique's space");
      }
      const std::string why = check_value(ep->bounds, ep->default_value);
      if (!why.empty()) {
        raise(Errc::validation_error,
              where + ": exposed default for dim '" + name + "' " + why);
      }
    }
    for (const auto& dim : ct.space.dims) {
      if (!covered.count(dim.name)) {
        raise(Errc::dim_coverage_gap,
              where + ": dim '" + dim.name +
                  "' is neither fixed nor exposed");
      }
    }
  }
  for (const auto& ep : v.exposed_params) {
    if (!technique_ids.count(ep.technique_id)) {
      raise(Errc::validation_error,
            "version " + std::to_string(v.version_id) +
                ": exposed param references technique '" + ep.technique_id +
                "' which is not committed");
    }
  }
}

// (fixed?, value) classification of one dim inside one version; nullopt when
// the technique's space lacks the dim.
struct DimState {
  bool exposed = false;
  ConfigValue value;
};

std::map<std::string, DimState> dim_states(const TemplateVersion& v,
                                           const CommittedTechnique& ct) {
  std::map<std::string, DimState> out;
  for (const auto& f : ct.fixed) out[f.dim] = {false, f.value};
  for (const auto& ep : v.exposed_params) {
    if (ep.technique_id == ct.technique_id) {
      out[ep.dim] = {true, ep.default_value};
    }
  }
  return out;
}

}  // namespace

Json to_json(const TemplateVersion& v) {
  Json committed = Json::array();
  for (const auto& ct : v.committed) {
    Json fixed = Json::array();
    for (const auto& f : ct.fixed) {
      fixed.push_back({{"dim", f.dim}, {"value", to_json(f.value)}});
    }
    committed.push_back({{"technique_id", ct.technique_id},
                         {"space", to_json(ct.space)},
                         {"fixed", std::move(fixed)}});
  }
  Json exposed = Json::array();
  for (const auto& ep : v.exposed_params) {
    exposed.push_back({{"technique_id", ep.technique_id},
                       {"dim", ep.dim},
                       {"default", to_json(ep.default_value)},
                       {"bounds", bounds_to_json(ep.bounds)}});
  }
  Json j;
  j["schema_version"] = 1;
  j["version_id"] = v.version_id;
  j["parent"] = v.parent ? Json(*v.parent) : Json(nullptr);
  j["committed"] = std::move(committed);
  j["exposed_params"] = std::move(exposed);
  j["provenance"] = {{"mmo_report", v.mmo_report_ref},
                     {"sensitivity", v.sensitivity_ref}};
  j["created_at"] = v.created_at;
  return j;
}

TemplateVersion template_version_from_json(const Json& j) {
  ObjectReader reader(j, "template_version");
  if (as_int(reader.require("schema_version"), "template_version.schema_version") != 1) {
    raise(Errc::validation_error, "template_version: unsupported schema_version");
  }
  TemplateVersion v;
  v.version_id = as_int(reader.require("version_id"), "template_version.version_id");
  const Json& parent = reader.require("parent");
  if (!parent.is_null()) {
    v.parent = as_int(parent, "template_version.parent");
  }
  const Json& committed = reader.require("committed");
  if (!committed.is_array()) {
    raise(Errc::validation_error, "template_version.committed must be an array");
  }
  for (const auto& cj : committed) {
    ObjectReader cr(cj, "committed technique");
    CommittedTechnique ct;
    ct.technique_id = as_string(cr.require("technique_id"), "committed.technique_id");
    ct.space = space_from_json(cr.require("space"));
    const Json& fixed = cr.require("fixed");
    if (!fixed.is_array()) {
      raise(Errc::validation_error, "committed.fixed must be an array");
    }
    for (const auto& fj : fixed) {
      ObjectReader fr(fj, "fixed param");
      FixedParam f;
      f.dim = as_string(fr.require("dim"), "fixed.dim");
      f.value = config_value_from_json(fr.require("value"), "fixed.value");
      fr.finish();
      ct.fixed.push_back(std::move(f));
    }
    cr.finish();
    v.committed.push_back(std::move(ct));
  }
  const Json& exposed = reader.require("exposed_params");
  if (!exposed.is_array()) {
    raise(Errc::validation_error, "template_version.exposed_params must be an array");
  }
  for (const auto& ej : exposed) {
    ObjectReader er(ej, "exposed param");
    ExposedParam ep;
    ep.technique_id = as_string(er.require("technique_id"), "exposed.technique_id");
    ep.dim = as_string(er.require("dim"), "exposed.dim");
    ep.default_value = config_value_from_json(er.require("default"), "exposed.default");
    ep.bounds = bounds_from_json(er.require("bounds"));
    er.finish();
    v.exposed_params.push_back(std::move(ep));
  }
  ObjectReader pr(reader.require("provenance"), "template_version.provenance");
  v.mmo_report_ref = as_string(pr.require("mmo_report"), "provenance.mmo_report");
  v.sensitivity_ref = as_string(pr.require("sensitivity"), "provenance.sensitivity");
  pr.finish();
  v.created_at = as_string(reader.require("created_at"), "template_version.created_at");
  reader.finish();
  return v;
}

Json to_json(const ModelInstance& m) {
  Json configs = Json::object();
  for (const auto& [technique_id, config] : m.resolved_configs) {
    configs[technique_id] = to_json(config);
  }
  Json j;
  j["schema_version"] = 1;
  j["model_id"] = m.model_id;
  j["template_version_id"] = m.template_version_id;
  j["resolved_configs"] = std::move(configs);
  j["model_inputs"] = m.model_inputs;
  return j;
}

Json to_json(const BacktestReport& r) {
  Json per_technique = Json::array();
  for (const auto& t : r.per_technique) {
    Json deltas = Json::object();
    for (const auto& [model, delta] : t.per_model_delta) deltas[model] = delta;
    Json failures = Json::object();
    for (const auto& [model, why] : t.failures) failures[model] = why;
    per_technique.push_back({{"technique_id", t.technique_id},
                             {"config", to_json(t.config)},
                             {"per_model_delta", std::move(deltas)},
                             {"failures", std::move(failures)},
                             {"aggregate", to_json(t.aggregate)},
                             {"pass", t.pass}});
  }
  Json j;
  j["schema_version"] = 1;
  j["per_technique"] = std::move(per_technique);
  j["total"] = to_json(r.total);
  j["pass"] = r.pass;
  return j;
}

BacktestReport backtest_report_from_json(const Json& j) {
  ObjectReader reader(j, "backtest_report");
  if (as_int(reader.require("schema_version"), "backtest_report.schema_version") != 1) {
    raise(Errc::validation_error, "backtest_report: unsupported schema_version");
  }
  BacktestReport r;
  const Json& per_technique = reader.require("per_technique");
  if (!per_technique.is_array()) {
    raise(Errc::validation_error, "backtest_report.per_technique must be an array");
  }
  for (const auto& tj : per_technique) {
    ObjectReader tr(tj, "backtest technique");
    BacktestTechniqueResult t;
    t.technique_id = as_string(tr.require("technique_id"), "backtest.technique_id");
    t.config = configuration_from_json(tr.require("config"));
    const Json& deltas = tr.require("per_model_delta");
    if (!deltas.is_object()) {
      raise(Errc::validation_error, "backtest.per_model_delta must be an object");
    }
    for (const auto& [model, delta] : deltas.items()) {
      t.per_model_delta[model] = as_double(delta, "backtest.per_model_delta." + model);
    }
    const Json& failures = tr.require("failures");
    if (!failures.is_object()) {
      raise(Errc::validation_error, "backtest.failures must be an object");
    }
    for (const auto& [model, why] : failures.items()) {
      t.failures[model] = as_string(why, "backtest.failures." + model);
    }
    t.aggregate = aggregate_result_from_json(tr.require("aggregate"));
    t.pass = as_bool(tr.require("pass"), "backtest.pass");
    tr.finish();
    r.per_technique.push_back(std::move(t));
  }
  r.total = aggregate_result_from_json(reader.require("total"));
  r.pass = as_bool(reader.require("pass"), "backtest_report.pass");
  reader.finish();
  return r;
}

Json to_json(const VersionDiff& d) {
  Json changed = Json::array();
  for (const auto& c : d.changed_values) {
    changed.push_back({{"technique_id", c.technique_id},
                       {"dim", c.dim},
                       {"from", to_json(c.from)},
                       {"to", to_json(c.to)},
                       {"exposed", c.exposed}});
  }
  Json exposure = Json::array();
  for (const auto& e : d.exposure_changes) {
    exposure.push_back({{"technique_id", e.technique_id},
                        {"dim", e.dim},
                        {"now_exposed", e.now_exposed}});
  }
  Json j;
  j["added"] = d.added;
  j["removed"] = d.removed;
  j["changed_values"] = std::move(changed);
  j["exposure_changes"] = std::move(exposure);
  return j;
}

const TemplateVersion& TemplateRegistry::version(int version_id) const {
  for (const auto& v : versions_) {
    if (v.version_id == version_id) return v;
  }
  raise(Errc::unknown_version,
        "no template version " + std::to_string(version_id) +
            " in a registry of " + std::to_string(versions_.size()));
}

const TemplateVersion& TemplateRegistry::commit(
    std::optional<int> parent_id,
    const std::vector<GeneralizedTechnique>& generalized,
    const std::map<std::string, Technique>& technique_defs,
    const std::map<std::string, SensitivityReport>& sensitivity,
    const std::string& mmo_report_ref, const std::string& sensitivity_ref) {
  if (versions_.empty()) {
    if (parent_id) {
      raise(Errc::stale_parent,
            "registry is empty; the first commit takes no parent, got " +
                std::to_string(*parent_id));
    }
  } else {
    const int head_id = versions_.back().version_id;
    if (!parent_id) {
      raise(Errc::stale_parent, "registry head is version " +
                                    std::to_string(head_id) +
                                    "; the commit must name it as parent");
    }
    if (*parent_id != head_id) {
      raise(Errc::stale_parent, "parent " + std::to_string(*parent_id) +
                                    " is stale; head is version " +
                                    std::to_string(head_id));
    }
  }

  std::set<std::string> superseded;
  for (const auto& g : generalized) {
    if (!superseded.insert(g.technique_id).second) {
      raise(Errc::duplicate_technique, "technique '" + g.technique_id +
                                           "' appears twice in one commit");
    }
  }

  TemplateVersion v;
  v.version_id = versions_.empty() ? 1 : versions_.back().version_id + 1;
  if (!versions_.empty()) v.parent = versions_.back().version_id;
  v.mmo_report_ref = mmo_report_ref;
  v.sensitivity_ref = sensitivity_ref;

  // Parent content survives unless this commit supersedes the technique.
  if (!versions_.empty()) {
    const TemplateVersion& head_v = versions_.back();
    for (const auto& ct : head_v.committed) {
      if (!superseded.count(ct.technique_id)) v.committed.push_back(ct);
    }
    for (const auto& ep : head_v.exposed_params) {
      if (!superseded.count(ep.technique_id)) v.exposed_params.push_back(ep);
    }
  }

  for (const auto& g : generalized) {
    const auto def_it = technique_defs.find(g.technique_id);
    if (def_it == technique_defs.end()) {
      raise(Errc::unknown_technique,
            "no definition for technique '" + g.technique_id + "'");
    }
    const Technique& def = def_it->second;
    def.space.validate();
    const ValidationReport fit = validate_configuration(def.space, g.optimal_config);
    if (!fit.ok()) {
      raise(Errc::invalid_configuration,
            "optimum for technique '" + g.technique_id +
                "' does not fit its space: " + fit.issues.front().message);
    }
    const auto sens_it = sensitivity.find(g.technique_id);
    if (sens_it == sensitivity.end()) {
      raise(Errc::validation_error,
            "no sensitivity report for technique '" + g.technique_id + "'");
    }
    // A report with no entries is the explicit expose-nothing marker.
    std::map<std::string, DimDecision> decision;
    for (const auto& entry : sens_it->second.entries) {
      if (!def.space.has_dim(entry.dim)) {
        raise(Errc::validation_error,
              "sensitivity for technique '" + g.technique_id +
                  "' names unknown dim '" + entry.dim + "'");
      }
      if (!decision.emplace(entry.dim, entry.decision).second) {
        raise(Errc::validation_error,
              "sensitivity for technique '" + g.technique_id +
                  "' decides dim '" + entry.dim + "' twice");
      }
    }
    CommittedTechnique ct;
    ct.technique_id = g.technique_id;
    ct.space = def.space;
    for (std::size_t d = 0; d < def.space.dims.size(); ++d) {
      const Dim& dim = def.space.dims[d];
      const auto dec = decision.find(dim.name);
      const bool expose = dec != decision.end() && dec->second == DimDecision::expose;
      if (expose) {
        v.exposed_params.push_back(
            {g.technique_id, dim.name, g.optimal_config.values[d], dim.kind});
      } else {
        ct.fixed.push_back({dim.name, g.optimal_config.values[d]});
      }
    }
    v.committed.push_back(std::move(ct));
  }

  std::sort(v.committed.begin(), v.committed.end(),
            [](const CommittedTechnique& a, const CommittedTechnique& b) {
              return a.technique_id < b.technique_id;
            });
  std::stable_sort(v.exposed_params.begin(), v.exposed_params.end(),
                   [](const ExposedParam& a, const ExposedParam& b) {
                     return a.technique_id < b.technique_id;
                   });

  validate_version(v);
  versions_.push_back(std::move(v));
  return versions_.back();
}

ModelInstance TemplateRegistry::instantiate(int version_id,
                                            const ModelDescriptor& model,
                                            const TechniqueOverrides& overrides,
                                            const std::string& model_inputs) const {
  const TemplateVersion& v = version(version_id);
  for (const auto& [technique_id, dims] : overrides) {
    (void)dims;
    const bool known = std::any_of(
        v.committed.begin(), v.committed.end(),
        [&](const CommittedTechnique& ct) { return ct.technique_id == technique_id; });
    if (!known) {
      raise(Errc::unknown_technique,
            "override targets technique '" + technique_id +
                "' which version " + std::to_string(version_id) + " does not commit");
    }
  }

  ModelInstance instance;
  instance.model_id = model.id;
  instance.template_version_id = version_id;
  instance.model_inputs = model_inputs;

  for (const auto& ct : v.committed) {
    std::map<std::string, ConfigValue> resolved;
    for (const auto& f : ct.fixed) resolved[f.dim] = f.value;
    const std::map<std::string, const ExposedParam*> exposed =
        exposed_by_dim(v, ct.technique_id);
    for (const auto& [name, ep] : exposed) resolved[name] = ep->default_value;

    const auto ov = overrides.find(ct.technique_id);
    if (ov != overrides.end()) {
      for (const auto& [dim, value] : ov->second) {
        if (!ct.space.has_dim(dim)) {
          raise(Errc::validation_error,
                "override names unknown dim '" + dim + "' of technique '" +
                    ct.technique_id + "'");
        }
        const auto ep = exposed.find(dim);
        if (ep == exposed.end()) {
          raise(Errc::override_on_standardized_dim,
                "dim '" + dim + "' of technique '" + ct.technique_id +
                    "' is standardized and cannot be overridden per model");
        }
        const std::string why = check_value(ep->second->bounds, value);
        if (!why.empty()) {
          raise(Errc::override_out_of_bounds,
                "override for '" + ct.technique_id + "." + dim + "' " + why);
        }
        resolved[dim] = value;
      }
    }

    Configuration config;
    config.values.reserve(ct.space.dims.size());
    for (const auto& dim : ct.space.dims) {
      config.values.push_back(resolved.at(dim.name));
    }
    const ValidationReport report = validate_configuration(ct.space, config);
    if (!report.ok()) {
      raise(Errc::validation_error,
            "resolved config for technique '" + ct.technique_id +
                "' is invalid: " + report.issues.front().message);
    }
    instance.resolved_configs[ct.technique_id] = std::move(config);
  }
  return instance;
}

BacktestReport TemplateRegistry::backtest(int version_id, const Fleet& fleet,
                                          Evaluator& evaluator,
                                          const Thresholds& thresholds) const {
  const TemplateVersion& v = version(version_id);
  if (fleet.models().empty()) {
    raise(Errc::empty_fleet, "backtest needs at least one model");
  }

  BacktestReport report;
  std::map<std::string, double> summed;
  std::map<std::string, bool> clean;
  for (const auto& model : fleet.models()) {
    summed[model.id] = 0.0;
    clean[model.id] = true;
  }

  for (const auto& ct : v.committed) {
    BacktestTechniqueResult result;
    result.technique_id = ct.technique_id;
    result.config = resolve_defaults(v, ct);

    std::vector<double> deltas;
    std::vector<double> raw_weights;
    for (const auto& model : fleet.models()) {
      try {
        const double performance =
            evaluator.evaluate(model.id, ct.technique_id, result.config, 0);
        const double delta =
            performance_delta(performance, model.baseline_performance);
        result.per_model_delta[model.id] = delta;
        summed[model.id] += delta;
        deltas.push_back(delta);
        raw_weights.push_back(model.weight);
      } catch (const Error& e) {
        result.failures[model.id] = e.what();
        clean[model.id] = false;
      }
    }
    if (deltas.empty()) {
      result.aggregate = failed_aggregate(thresholds);
    } else {
      result.aggregate =
          aggregate_delta(deltas, normalize_weights(raw_weights), thresholds);
    }
    result.pass = result.aggregate.feasible &&
                  *result.aggregate.aggregate >= thresholds.tau;
    report.per_technique.push_back(std::move(result));
  }

  // Accounting total: per-model deltas summed across techniques, scored once.
  // Models that failed any technique drop out of the total.
  std::vector<double> total_deltas;
  std::vector<double> total_weights;
  for (const auto& model : fleet.models()) {
    if (!clean[model.id]) continue;
    total_deltas.push_back(summed[model.id]);
    total_weights.push_back(model.weight);
  }
  if (total_deltas.empty()) {
    report.total = failed_aggregate(thresholds);
  } else {
    report.total = aggregate_delta(total_deltas,
                                   normalize_weights(total_weights), thresholds);
  }
  bool techniques_pass = true;
  for (const auto& t : report.per_technique) techniques_pass &= t.pass;
  report.pass = techniques_pass && report.total.feasible &&
                *report.total.aggregate >= thresholds.tau;
  return report;
}

VersionDiff TemplateRegistry::diff(const TemplateVersion& a,
                                   const TemplateVersion& b) {
  VersionDiff d;
  std::map<std::string, const CommittedTechnique*> in_a;
  std::map<std::string, const CommittedTechnique*> in_b;
  for (const auto& ct : a.committed) in_a[ct.technique_id] = &ct;
  for (const auto& ct : b.committed) in_b[ct.technique_id] = &ct;

  for (const auto& [technique_id, ct] : in_a) {
    (void)ct;
    if (!in_b.count(technique_id)) d.removed.push_back(technique_id);
  }
  for (const auto& [technique_id, ct] : in_b) {
    (void)ct;
    if (!in_a.count(technique_id)) d.added.push_back(technique_id);
  }

  for (const auto& [technique_id, ct_a] : in_a) {
    const auto it = in_b.find(technique_id);
    if (it == in_b.end()) continue;
    const CommittedTechnique* ct_b = it->second;
    const std::map<std::string, DimState> sa = dim_states(a, *ct_a);
    const std::map<std::string, DimState> sb = dim_states(b, *ct_b);
    // Dims the technique gained or lost are reported as paths.
    for (const auto& [dim, state] : sa) {
      (void)state;
      if (!sb.count(dim)) d.removed.push_back(technique_id + "/" + dim);
    }
    for (const auto& [dim, state] : sb) {
      (void)state;
      if (!sa.count(dim)) d.added.push_back(technique_id + "/" + dim);
    }
    for (const auto& [dim, state_a] : sa) {
      const auto sb_it = sb.find(dim);
      if (sb_it == sb.end()) continue;
      const DimState& state_b = sb_it->second;
      if (state_a.exposed != state_b.exposed) {
        d.exposure_changes.push_back({technique_id, dim, state_b.exposed});
      }
      if (!(state_a.value == state_b.value)) {
        d.changed_values.push_back(
            {technique_id, dim, state_a.value, state_b.value, state_b.exposed});
      }
    }
  }
  return d;
}

void TemplateRegistry::save(const std::string& path) const {
  std::string out;
  for (const auto& v : versions_) {
    out += canonical_dump(to_json(v));
    out += '\n';
  }
  write_file_atomic(path, out);
}

TemplateRegistry TemplateRegistry::load(const std::string& path) {
  const std::string text = read_file(path);
  TemplateRegistry registry;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::string line = text.substr(
        start, end == std::string::npos ? std::string::npos : end - start);
    ++line_no;
    if (!line.empty()) {
      try {
        registry.versions_.push_back(template_version_from_json(parse_json(line)));
      } catch (const Error& e) {
        raise(e.code(), path + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  // Chain: ids run 1..n, each link naming its predecessor.
  for (std::size_t i = 0; i < registry.versions_.size(); ++i) {
    const TemplateVersion& v = registry.versions_[i];
    const int expected_id = static_cast<int>(i) + 1;
    if (v.version_id != expected_id) {
      raise(Errc::validation_error,
            path + ": expected version " + std::to_string(expected_id) +
                " at position " + std::to_string(i + 1) + ", found " +
                std::to_string(v.version_id));
    }
    if (i == 0) {
      if (v.parent) {
        raise(Errc::validation_error,
              path + ": version 1 must not name a parent");
      }
    } else if (!v.parent || *v.parent != expected_id - 1) {
      raise(Errc::validation_error,
            path + ": version " + std::to_string(expected_id) +
                " must name version " + std::to_string(expected_id - 1) +
                " as parent");
    }
    validate_version(v);
  }
  return registry;
}

std::uint64_t TemplateRegistry::content_hash() const {
  std::string all;
  for (const auto& v : versions_) {
    all += canonical_dump(to_json(v));
    all += '\n';
  }
  return fnv1a64(std::string_view(all));
}

}  // namespace fleetopt
