#include "fleetopt/serialization.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

void check_finite(const Json& j, const std::string& path) {
  switch (j.type()) {
    case Json::value_t::number_float:
      if (!std::isfinite(j.get<double>())) {
        raise(Errc::validation_error,
              "non-finite number at " + path + " cannot be serialized");
      }
      break;
    case Json::value_t::array: {
      std::size_t i = 0;
      for (const auto& item : j) {
        check_finite(item, path + "[" + std::to_string(i++) + "]");
      }
      break;
    }
    case Json::value_t::object:
      for (const auto& [key, value] : j.items()) {
        check_finite(value, path + "." + key);
      }
      break;
    default:
      break;
  }
}

void require_schema(ObjectReader& reader, const std::string& ctx) {
  if (as_int(reader.require("schema_version"), ctx + ".schema_version") != 1) {
    raise(Errc::validation_error, ctx + ": unsupported schema_version");
  }
}

}  // namespace

double as_double(const Json& j, const std::string& ctx) {
  if (!j.is_number()) raise(Errc::validation_error, ctx + " must be a number");
  return j.get<double>();
}

std::int64_t as_i64(const Json& j, const std::string& ctx) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) {
    raise(Errc::validation_error, ctx + " must be an integer");
  }
  return j.get<std::int64_t>();
}

int as_int(const Json& j, const std::string& ctx) {
  return static_cast<int>(as_i64(j, ctx));
}

std::uint64_t as_u64(const Json& j, const std::string& ctx) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  raise(Errc::validation_error, ctx + " must be a non-negative integer");
}

bool as_bool(const Json& j, const std::string& ctx) {
  if (!j.is_boolean()) raise(Errc::validation_error, ctx + " must be a boolean");
  return j.get<bool>();
}

std::string as_string(const Json& j, const std::string& ctx) {
  if (!j.is_string()) raise(Errc::validation_error, ctx + " must be a string");
  return j.get<std::string>();
}

std::string canonical_dump(const Json& j) {
  check_finite(j, "$");
  return j.dump();
}

std::uint64_t canonical_hash(const Json& j) {
  const std::string s = canonical_dump(j);
  return fnv1a64(std::string_view(s));
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t stop = std::min(text.size(), e.byte > 0 ? e.byte - 1 : 0);
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    raise(Errc::parse_error, "line " + std::to_string(line) + ", column " +
                                 std::to_string(col) + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::missing_artifact, "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Json load_json_file(const std::string& path) {
  return parse_json(read_file(path));
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(Errc::validation_error, "cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out.good()) raise(Errc::validation_error, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    raise(Errc::validation_error,
          "cannot move " + tmp + " into place: " + ec.message());
  }
}

ObjectReader::ObjectReader(const Json& j, std::string context)
    : j_(j), context_(std::move(context)) {
  if (!j_.is_object()) {
    raise(Errc::validation_error, context_ + " must be a JSON object");
  }
}

const Json& ObjectReader::require(const std::string& key) {
  const auto it = j_.find(key);
  if (it == j_.end()) {
    raise(Errc::validation_error, context_ + " is missing key '" + key + "'");
  }
  seen_.insert(key);
  return *it;
}

const Json* ObjectReader::optional(const std::string& key) {
  const auto it = j_.find(key);
  if (it == j_.end()) return nullptr;
  seen_.insert(key);
  return &*it;
}

void ObjectReader::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (seen_.count(key) == 0) {
      raise(Errc::validation_error,
            context_ + " has unknown key '" + key + "'");
    }
  }
}

Json to_json(const ConfigValue& v) {
  return std::visit([](const auto& x) { return Json(x); }, v);
}

ConfigValue config_value_from_json(const Json& j, const std::string& context) {
  if (j.is_number_float()) return j.get<double>();
  if (j.is_number_integer() || j.is_number_unsigned()) {
    return j.get<std::int64_t>();
  }
  if (j.is_string()) return j.get<std::string>();
  raise(Errc::validation_error,
        context + " must be a number or string configuration value");
}

Json to_json(const Configuration& c) {
  Json arr = Json::array();
  for (const auto& v : c.values) arr.push_back(to_json(v));
  return arr;
}

Configuration configuration_from_json(const Json& j) {
  if (!j.is_array()) {
    raise(Errc::validation_error, "configuration must be an array");
  }
  Configuration c;
  std::size_t i = 0;
  for (const auto& item : j) {
    c.values.push_back(
        config_value_from_json(item, "configuration[" + std::to_string(i++) + "]"));
  }
  return c;
}

Json to_json(const Dim& d) {
  Json j{{"name", d.name}};
  if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
    j["type"] = "continuous";
    j["lo"] = c->lo;
    j["hi"] = c->hi;
  } else if (const auto* i = std::get_if<IntegerDim>(&d.kind)) {
    j["type"] = "integer";
    j["lo"] = i->lo;
    j["hi"] = i->hi;
  } else {
    j["type"] = "categorical";
    j["values"] = std::get<CategoricalDim>(d.kind).values;
  }
  return j;
}

Dim dim_from_json(const Json& j) {
  ObjectReader reader(j, "dim");
  Dim d;
  d.name = as_string(reader.require("name"), "dim.name");
  const std::string type = as_string(reader.require("type"), "dim.type");
  if (type == "continuous") {
    ContinuousDim c;
    c.lo = as_double(reader.require("lo"), "dim.lo");
    c.hi = as_double(reader.require("hi"), "dim.hi");
    d.kind = c;
  } else if (type == "integer") {
    IntegerDim i;
    i.lo = as_i64(reader.require("lo"), "dim.lo");
    i.hi = as_i64(reader.require("hi"), "dim.hi");
    d.kind = i;
  } else if (type == "categorical") {
    CategoricalDim c;
    const Json& values = reader.require("values");
    if (!values.is_array()) {
      raise(Errc::validation_error, "dim.values must be an array");
    }
    for (const auto& v : values) c.values.push_back(as_string(v, "dim.values[]"));
    d.kind = c;
  } else {
    raise(Errc::validation_error, "dim.type '" + type + "' is not recognized");
  }
  reader.finish();
  return d;
}

Json to_json(const HyperparameterSpace& s) {
  Json dims = Json::array();
  for (const auto& d : s.dims) dims.push_back(to_json(d));
  return Json{{"dims", dims}};
}

HyperparameterSpace space_from_json(const Json& j) {
  ObjectReader reader(j, "space");
  const Json& dims = reader.require("dims");
  if (!dims.is_array()) raise(Errc::validation_error, "space.dims must be an array");
  HyperparameterSpace s;
  for (const auto& d : dims) s.dims.push_back(dim_from_json(d));
  reader.finish();
  return s;
}

Json to_json(const Technique& t) {
  return Json{{"id", t.id},
              {"space", to_json(t.space)},
              {"evaluator_binding", t.evaluator_binding}};
}

Technique technique_from_json(const Json& j) {
  ObjectReader reader(j, "technique");
  Technique t;
  t.id = as_string(reader.require("id"), "technique.id");
  t.space = space_from_json(reader.require("space"));
  if (const Json* b = reader.optional("evaluator_binding")) {
    t.evaluator_binding = as_string(*b, "technique.evaluator_binding");
  }
  reader.finish();
  return t;
}

Json to_json(const ModelDescriptor& m) {
  return Json{{"id", m.id},
              {"ranking_stage", to_string(m.ranking_stage)},
              {"hardware", to_string(m.hardware)},
              {"optimization_event", m.optimization_event},
              {"product_surface", m.product_surface},
              {"data_constraint", to_string(m.data_constraint)},
              {"flops", m.flops},
              {"baseline_performance", m.baseline_performance},
              {"weight", m.weight}};
}

ModelDescriptor model_from_json(const Json& j) {
  ObjectReader reader(j, "model");
  ModelDescriptor m;
  m.id = as_string(reader.require("id"), "model.id");
  m.ranking_stage = ranking_stage_from_string(
      as_string(reader.require("ranking_stage"), "model.ranking_stage"));
  m.hardware =
      hardware_from_string(as_string(reader.require("hardware"), "model.hardware"));
  m.optimization_event =
      as_string(reader.require("optimization_event"), "model.optimization_event");
  m.product_surface =
      as_string(reader.require("product_surface"), "model.product_surface");
  m.data_constraint = data_constraint_from_string(
      as_string(reader.require("data_constraint"), "model.data_constraint"));
  m.flops = as_double(reader.require("flops"), "model.flops");
  m.baseline_performance = as_double(reader.require("baseline_performance"),
                                     "model.baseline_performance");
  m.weight = as_double(reader.require("weight"), "model.weight");
  reader.finish();
  return m;
}

Json to_json(const Fleet& f) {
  Json arr = Json::array();
  for (const auto& m : f.models()) arr.push_back(to_json(m));
  return arr;
}

Fleet fleet_from_json(const Json& j) {
  if (!j.is_array()) raise(Errc::validation_error, "fleet must be an array");
  std::vector<ModelDescriptor> models;
  for (const auto& m : j) models.push_back(model_from_json(m));
  return Fleet{std::move(models)};
}

Json to_json(const Thresholds& t) {
  return Json{{"alpha", t.alpha}, {"epsilon", t.epsilon}, {"tau", t.tau}};
}

Thresholds thresholds_from_json(const Json& j) {
  ObjectReader reader(j, "thresholds");
  Thresholds t;
  if (const Json* a = reader.optional("alpha")) t.alpha = as_double(*a, "thresholds.alpha");
  if (const Json* e = reader.optional("epsilon")) t.epsilon = as_double(*e, "thresholds.epsilon");
  if (const Json* x = reader.optional("tau")) t.tau = as_double(*x, "thresholds.tau");
  reader.finish();
  try {
    t.validate();
  } catch (const Error& e) {
    raise(Errc::validation_error, e.what());
  }
  return t;
}

Json to_json(const AggregateResult& a) {
  Json j{{"weighted_mean", a.weighted_mean},
         {"regression_rate", a.regression_rate},
         {"epsilon", a.epsilon},
         {"feasible", a.feasible}};
  j["aggregate"] = a.aggregate.has_value() ? Json(*a.aggregate) : Json(nullptr);
  return j;
}

AggregateResult aggregate_result_from_json(const Json& j) {
  ObjectReader reader(j, "aggregate");
  AggregateResult a;
  a.weighted_mean = as_double(reader.require("weighted_mean"), "aggregate.weighted_mean");
  a.regression_rate =
      as_double(reader.require("regression_rate"), "aggregate.regression_rate");
  a.epsilon = as_double(reader.require("epsilon"), "aggregate.epsilon");
  a.feasible = as_bool(reader.require("feasible"), "aggregate.feasible");
  const Json& value = reader.require("aggregate");
  if (value.is_null()) {
    a.aggregate.reset();
  } else {
    a.aggregate = as_double(value, "aggregate.aggregate");
  }
  reader.finish();
  if (a.feasible != a.aggregate.has_value()) {
    raise(Errc::validation_error,
          "aggregate value must be present exactly when feasible");
  }
  return a;
}

Json to_json(const TrialRecord& t) {
  Json per_model = Json::object();
  for (const auto& [id, out] : t.per_model) {
    per_model[id] = Json{{"performance", out.performance},
                         {"delta", out.delta},
                         {"repeat_variance", out.repeat_variance}};
  }
  Json failures = Json::object();
  for (const auto& [id, msg] : t.failures) failures[id] = msg;
  return Json{{"schema_version", 1},
              {"technique_id", t.technique_id},
              {"iteration", t.iteration},
              {"config", to_json(t.config)},
              {"per_model", per_model},
              {"failures", failures},
              {"aggregate", to_json(t.aggregate)},
              {"seed", t.seed},
              {"wall_time", t.wall_time},
              {"repeats", t.repeats},
              {"valid", t.valid}};
}

TrialRecord trial_record_from_json(const Json& j) {
  ObjectReader reader(j, "trial");
  require_schema(reader, "trial");
  TrialRecord t;
  t.technique_id = as_string(reader.require("technique_id"), "trial.technique_id");
  t.iteration = as_int(reader.require("iteration"), "trial.iteration");
  t.config = configuration_from_json(reader.require("config"));
  const Json& per_model = reader.require("per_model");
  if (!per_model.is_object()) {
    raise(Errc::validation_error, "trial.per_model must be an object");
  }
  for (const auto& [id, out] : per_model.items()) {
    ObjectReader entry(out, "trial.per_model." + id);
    PerModelOutcome o;
    o.performance = as_double(entry.require("performance"), "performance");
    o.delta = as_double(entry.require("delta"), "delta");
    o.repeat_variance = as_double(entry.require("repeat_variance"), "repeat_variance");
    entry.finish();
    t.per_model.emplace(id, o);
  }
  const Json& failures = reader.require("failures");
  if (!failures.is_object()) {
    raise(Errc::validation_error, "trial.failures must be an object");
  }
  for (const auto& [id, msg] : failures.items()) {
    t.failures.emplace(id, as_string(msg, "trial.failures." + id));
  }
  t.aggregate = aggregate_result_from_json(reader.require("aggregate"));
  t.seed = as_u64(reader.require("seed"), "trial.seed");
  t.wall_time = as_double(reader.require("wall_time"), "trial.wall_time");
  t.repeats = as_int(reader.require("repeats"), "trial.repeats");
  t.valid = as_bool(reader.require("valid"), "trial.valid");
  reader.finish();
  return t;
}

Json to_json(const GeneralizedTechnique& g) {
  return Json{{"technique_id", g.technique_id},
              {"optimal_config", to_json(g.optimal_config)},
              {"optimal_performance", g.optimal_performance},
              {"best", to_json(g.best)},
              {"best_iteration", g.best_iteration}};
}

GeneralizedTechnique generalized_from_json(const Json& j) {
  ObjectReader reader(j, "generalized");
  GeneralizedTechnique g;
  g.technique_id = as_string(reader.require("technique_id"), "generalized.technique_id");
  g.optimal_config = configuration_from_json(reader.require("optimal_config"));
  g.optimal_performance =
      as_double(reader.require("optimal_performance"), "generalized.optimal_performance");
  g.best = aggregate_result_from_json(reader.require("best"));
  g.best_iteration = as_int(reader.require("best_iteration"), "generalized.best_iteration");
  reader.finish();
  return g;
}

Json to_json(const MmoReport& r) {
  Json generalized = Json::array();
  for (const auto& g : r.generalized) generalized.push_back(to_json(g));
  Json rejected = Json::array();
  for (const auto& rej : r.rejected) {
    rejected.push_back(Json{{"technique_id", rej.technique_id},
                            {"reason", to_string(rej.reason)},
                            {"detail", rej.detail}});
  }
  return Json{{"schema_version", 1},
              {"generalized", generalized},
              {"rejected", rejected},
              {"evaluation_count", r.evaluation_count}};
}

MmoReport mmo_report_from_json(const Json& j) {
  ObjectReader reader(j, "report");
  require_schema(reader, "report");
  MmoReport r;
  for (const auto& g : reader.require("generalized")) {
    r.generalized.push_back(generalized_from_json(g));
  }
  for (const auto& rej : reader.require("rejected")) {
    ObjectReader entry(rej, "report.rejected[]");
    RejectedTechnique rt;
    rt.technique_id = as_string(entry.require("technique_id"), "rejected.technique_id");
    rt.reason = rejection_reason_from_string(
        as_string(entry.require("reason"), "rejected.reason"));
    rt.detail = as_string(entry.require("detail"), "rejected.detail");
    entry.finish();
    r.rejected.push_back(std::move(rt));
  }
  r.evaluation_count =
      as_i64(reader.require("evaluation_count"), "report.evaluation_count");
  reader.finish();
  return r;
}

Json to_json(const SensitivityReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json per_model = Json::object();
    for (const auto& [id, beta] : e.per_model_betas) per_model[id] = beta;
    entries.push_back(Json{{"dim", e.dim},
                           {"global_beta", e.global_beta},
                           {"per_model_betas", per_model},
                           {"cross_model_variance", e.cross_model_variance},
                           {"decision", to_string(e.decision)}});
  }
  Json excluded = Json::array();
  for (const auto& [id, reason] : r.excluded_models) {
    excluded.push_back(Json{{"model", id}, {"reason", reason}});
  }
  return Json{{"schema_version", 1},
              {"entries", entries},
              {"intercept", r.intercept},
              {"residual_norm", r.residual_norm},
              {"trials_used", r.trials_used},
              {"excluded_models", excluded}};
}

SensitivityReport sensitivity_report_from_json(const Json& j) {
  ObjectReader reader(j, "sensitivity");
  require_schema(reader, "sensitivity");
  SensitivityReport r;
  for (const auto& e : reader.require("entries")) {
    ObjectReader entry(e, "sensitivity.entries[]");
    SensitivityEntry se;
    se.dim = as_string(entry.require("dim"), "entry.dim");
    se.global_beta = as_double(entry.require("global_beta"), "entry.global_beta");
    for (const auto& [id, beta] : entry.require("per_model_betas").items()) {
      se.per_model_betas[id] = as_double(beta, "entry.per_model_betas." + id);
    }
    se.cross_model_variance = as_double(entry.require("cross_model_variance"),
                                        "entry.cross_model_variance");
    se.decision =
        dim_decision_from_string(as_string(entry.require("decision"), "entry.decision"));
    entry.finish();
    r.entries.push_back(std::move(se));
  }
  r.intercept = as_double(reader.require("intercept"), "sensitivity.intercept");
  r.residual_norm =
      as_double(reader.require("residual_norm"), "sensitivity.residual_norm");
  r.trials_used = as_int(reader.require("trials_used"), "sensitivity.trials_used");
  for (const auto& e : reader.require("excluded_models")) {
    ObjectReader entry(e, "sensitivity.excluded_models[]");
    r.excluded_models.emplace_back(as_string(entry.require("model"), "model"),
                                   as_string(entry.require("reason"), "reason"));
    entry.finish();
  }
  reader.finish();
  return r;
}

Json to_json(const RepresentativeSet& r) {
  Json assignment = Json::object();
  for (const auto& [id, cluster] : r.cluster_assignment) assignment[id] = cluster;
  Json curve = Json::array();
  for (const auto& [k, sse] : r.inertia_curve) {
    curve.push_back(Json::array({k, sse}));
  }
  return Json{{"schema_version", 1},
              {"chosen_ids", r.chosen_ids},
              {"k", r.k},
              {"cluster_assignment", assignment},
              {"inertia_curve", curve}};
}

RepresentativeSet representative_set_from_json(const Json& j) {
  ObjectReader reader(j, "representatives");
  require_schema(reader, "representatives");
  RepresentativeSet r;
  for (const auto& id : reader.require("chosen_ids")) {
    r.chosen_ids.push_back(as_string(id, "representatives.chosen_ids[]"));
  }
  r.k = as_int(reader.require("k"), "representatives.k");
  for (const auto& [id, cluster] : reader.require("cluster_assignment").items()) {
    r.cluster_assignment[id] = as_int(cluster, "representatives.cluster_assignment");
  }
  for (const auto& pair : reader.require("inertia_curve")) {
    if (!pair.is_array() || pair.size() != 2) {
      raise(Errc::validation_error, "inertia_curve entries must be [k, sse] pairs");
    }
    r.inertia_curve.emplace_back(as_int(pair[0], "inertia_curve.k"),
                                 as_double(pair[1], "inertia_curve.sse"));
  }
  reader.finish();
  return r;
}

Json to_json(const HoldoutReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json deltas = Json::object();
    for (const auto& [id, d] : e.per_model_delta) deltas[id] = d;
    Json failures = Json::object();
    for (const auto& [id, msg] : e.failures) failures[id] = msg;
    entries.push_back(Json{{"technique_id", e.technique_id},
                           {"config", to_json(e.config)},
                           {"aggregate", to_json(e.aggregate)},
                           {"transfer", e.transfer},
                           {"per_model_delta", deltas},
                           {"failures", failures}});
  }
  return Json{{"schema_version", 1}, {"entries", entries}};
}

HoldoutReport holdout_report_from_json(const Json& j) {
  ObjectReader reader(j, "holdout");
  require_schema(reader, "holdout");
  HoldoutReport r;
  for (const auto& e : reader.require("entries")) {
    ObjectReader entry(e, "holdout.entries[]");
    HoldoutEntry he;
    he.technique_id = as_string(entry.require("technique_id"), "entry.technique_id");
    he.config = configuration_from_json(entry.require("config"));
    he.aggregate = aggregate_result_from_json(entry.require("aggregate"));
    he.transfer = as_bool(entry.require("transfer"), "entry.transfer");
    for (const auto& [id, d] : entry.require("per_model_delta").items()) {
      he.per_model_delta[id] = as_double(d, "entry.per_model_delta." + id);
    }
    for (const auto& [id, msg] : entry.require("failures").items()) {
      he.failures[id] = as_string(msg, "entry.failures." + id);
    }
    entry.finish();
    r.entries.push_back(std::move(he));
  }
  reader.finish();
  return r;
}

std::string trial_log_to_jsonl(const std::vector<TrialRecord>& log) {
  std::string out;
  for (const auto& rec : log) {
    out += canonical_dump(to_json(rec));
    out += '\n';
  }
  return out;
}

std::vector<TrialRecord> trial_log_from_jsonl(const std::string& text) {
  std::vector<TrialRecord> log;
  std::map<std::string, int> last_iteration;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    TrialRecord rec;
    try {
      rec = trial_record_from_json(parse_json(line));
    } catch (const Error& e) {
      raise(e.code(), "trial log line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto it = last_iteration.find(rec.technique_id);
    if (it != last_iteration.end() && rec.iteration <= it->second) {
      raise(Errc::validation_error,
            "trial log line " + std::to_string(line_no) +
                ": iterations for " + rec.technique_id + " must increase");
    }
    last_iteration[rec.technique_id] = rec.iteration;
    log.push_back(std::move(rec));
  }
  return log;
}

}  // namespace fleetopt
