#include "fleetopt/run_config.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

std::pair<double, double> range_from_json(const Json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2) {
    raise(Errc::validation_error, ctx + " must be a [lo, hi] pair");
  }
  return {as_double(j[0], ctx + "[0]"), as_double(j[1], ctx + "[1]")};
}

SyntheticTechniqueSpec technique_spec_from_json(const Json& j,
                                                const std::string& ctx) {
  ObjectReader reader(j, ctx);
  SyntheticTechniqueSpec spec;
  const Json& center = reader.require("global_center");
  if (!center.is_array() || center.empty()) {
    raise(Errc::validation_error, ctx + ".global_center must be a nonempty array");
  }
  for (const auto& c : center) {
    spec.global_center.push_back(as_double(c, ctx + ".global_center[]"));
  }
  if (const Json* v = reader.optional("center_spread")) {
    spec.center_spread = as_double(*v, ctx + ".center_spread");
  }
  if (const Json* v = reader.optional("peak_delta_range")) {
    spec.peak_delta_range = range_from_json(*v, ctx + ".peak_delta_range");
  }
  if (const Json* v = reader.optional("curvature_range")) {
    spec.curvature_range = range_from_json(*v, ctx + ".curvature_range");
  }
  if (const Json* v = reader.optional("regressor_fraction")) {
    spec.regressor_fraction = as_double(*v, ctx + ".regressor_fraction");
  }
  if (const Json* v = reader.optional("noise_std")) {
    spec.noise_std = as_double(*v, ctx + ".noise_std");
  }
  reader.finish();
  return spec;
}

SyntheticFleetSpec synthetic_spec_from_json(const Json& j,
                                            std::uint64_t default_seed) {
  ObjectReader reader(j, "evaluator.spec");
  SyntheticFleetSpec spec;
  spec.model_count = as_int(reader.require("model_count"), "spec.model_count");
  if (const Json* v = reader.optional("attribute_clusters")) {
    spec.attribute_clusters = as_int(*v, "spec.attribute_clusters");
  }
  spec.seed = default_seed;
  if (const Json* v = reader.optional("seed")) {
    spec.seed = as_u64(*v, "spec.seed");
  }
  const Json& techniques = reader.require("techniques");
  if (!techniques.is_object()) {
    raise(Errc::validation_error, "spec.techniques must be an object");
  }
  for (const auto& [technique_id, tj] : techniques.items()) {
    spec.techniques[technique_id] =
        technique_spec_from_json(tj, "spec.techniques." + technique_id);
  }
  reader.finish();
  return spec;
}

}  // namespace

void RunConfig::validate() const {
  if (!std::isfinite(thresholds.alpha) || thresholds.alpha < 0) {
    raise(Errc::validation_error, "alpha must be finite and >= 0");
  }
  if (!std::isfinite(thresholds.epsilon) || thresholds.epsilon < 0 ||
      thresholds.epsilon > 1) {
    raise(Errc::validation_error, "epsilon must lie in [0, 1]");
  }
  if (!std::isfinite(thresholds.tau) || thresholds.tau < 0) {
    raise(Errc::validation_error, "tau must be finite and >= 0");
  }
  if (techniques.empty()) {
    raise(Errc::validation_error, "at least one technique is required");
  }
  std::set<std::string> ids;
  for (const auto& t : techniques) {
    if (t.id.empty()) raise(Errc::validation_error, "technique id is empty");
    if (!ids.insert(t.id).second) {
      raise(Errc::duplicate_technique, "technique '" + t.id + "' listed twice");
    }
    t.space.validate();
  }
  if (iterations_per_technique <= 0) {
    raise(Errc::validation_error, "iterations_per_technique must be positive");
  }
  if (evaluation_repeats <= 0) {
    raise(Errc::validation_error, "evaluation_repeats must be positive");
  }
  acquisition.validate();
  if (k_min < 1) raise(Errc::validation_error, "k_min must be >= 1");
  if (k_max < 0 || (k_max > 0 && k_max < k_min)) {
    raise(Errc::validation_error, "k_max must be 0 (auto) or >= k_min");
  }
  if (fixed_k < 0) raise(Errc::validation_error, "fixed_k must be >= 0");
  if (!std::isfinite(holdout_fraction) || holdout_fraction < 0 ||
      holdout_fraction > 1) {
    raise(Errc::validation_error, "holdout_fraction must lie in [0, 1]");
  }
  exposure.validate();
  if (backend == "synthetic") {
    if (fleet_given) {
      // Responses are drawn over the supplied fleet.
      if (synthetic.model_count != 0) {
        raise(Errc::validation_error,
              "with an explicit fleet the synthetic spec must omit model_count");
      }
      SyntheticFleetSpec checked = synthetic;
      checked.model_count = static_cast<int>(fleet.size());
      checked.validate();
    } else {
      synthetic.validate();
    }
    for (const auto& t : techniques) {
      const auto it = synthetic.techniques.find(t.id);
      if (it == synthetic.techniques.end()) {
        raise(Errc::validation_error,
              "synthetic spec is missing technique '" + t.id + "'");
      }
      if (it->second.global_center.size() != t.space.encoded_width()) {
        raise(Errc::validation_error,
              "global_center for technique '" + t.id + "' must have " +
                  std::to_string(t.space.encoded_width()) + " coordinates");
      }
    }
  } else if (backend == "command") {
    if (!fleet_given || fleet.models().empty()) {
      raise(Errc::validation_error,
            "the command backend requires an explicit, nonempty fleet");
    }
    if (command.argv.empty()) {
      raise(Errc::validation_error, "command backend argv is empty");
    }
    if (!(command.timeout_s > 0)) {
      raise(Errc::validation_error, "timeout_s must be positive");
    }
    if (command.max_in_flight < 0) {
      raise(Errc::validation_error, "max_in_flight must be >= 0");
    }
  } else {
    raise(Errc::validation_error,
          "backend must be 'synthetic' or 'command', got '" + backend + "'");
  }
}

RunConfig run_config_from_json(const Json& j, const std::string& base_dir) {
  ObjectReader reader(j, "run config");
  if (const Json* v = reader.optional("schema_version")) {
    if (as_int(*v, "schema_version") != 1) {
      raise(Errc::validation_error, "unsupported schema_version");
    }
  }
  RunConfig config;
  if (const Json* v = reader.optional("seed")) {
    config.seed = as_u64(*v, "seed");
  }
  if (const Json* v = reader.optional("thresholds")) {
    config.thresholds = thresholds_from_json(*v);
  }

  const Json* fleet_inline = reader.optional("fleet");
  const Json* fleet_file = reader.optional("fleet_file");
  if (fleet_inline && fleet_file) {
    raise(Errc::validation_error, "give either fleet or fleet_file, not both");
  }
  if (fleet_inline) {
    config.fleet = fleet_from_json(*fleet_inline);
    config.fleet_given = true;
  } else if (fleet_file) {
    const std::filesystem::path p(as_string(*fleet_file, "fleet_file"));
    const std::filesystem::path resolved =
        p.is_absolute() ? p : std::filesystem::path(base_dir) / p;
    config.fleet = fleet_from_json(load_json_file(resolved.string()));
    config.fleet_given = true;
  }

  const Json& techniques = reader.require("techniques");
  if (!techniques.is_array() || techniques.empty()) {
    raise(Errc::validation_error, "techniques must be a nonempty array");
  }
  for (const auto& tj : techniques) {
    config.techniques.push_back(technique_from_json(tj));
  }

  if (const Json* v = reader.optional("optimization")) {
    ObjectReader opt(*v, "optimization");
    if (const Json* x = opt.optional("iterations_per_technique")) {
      config.iterations_per_technique = as_int(*x, "iterations_per_technique");
    }
    if (const Json* x = opt.optional("evaluation_repeats")) {
      config.evaluation_repeats = as_int(*x, "evaluation_repeats");
    }
    if (const Json* x = opt.optional("mc_samples")) {
      config.acquisition.mc_samples = as_int(*x, "mc_samples");
    }
    if (const Json* x = opt.optional("candidate_pool")) {
      config.acquisition.candidate_pool = as_int(*x, "candidate_pool");
    }
    if (const Json* x = opt.optional("initial_design_size")) {
      config.acquisition.initial_design_size = as_int(*x, "initial_design_size");
    }
    opt.finish();
  }

  if (const Json* v = reader.optional("representatives")) {
    ObjectReader reps(*v, "representatives");
    if (const Json* x = reps.optional("k_min")) config.k_min = as_int(*x, "k_min");
    if (const Json* x = reps.optional("k_max")) config.k_max = as_int(*x, "k_max");
    if (const Json* x = reps.optional("fixed_k")) {
      config.fixed_k = as_int(*x, "fixed_k");
    }
    reps.finish();
  }
  if (const Json* v = reader.optional("holdout_fraction")) {
    config.holdout_fraction = as_double(*v, "holdout_fraction");
  }
  if (const Json* v = reader.optional("exposure")) {
    ObjectReader exp(*v, "exposure");
    if (const Json* x = exp.optional("beta_threshold_fraction")) {
      config.exposure.beta_threshold_fraction =
          as_double(*x, "beta_threshold_fraction");
    }
    if (const Json* x = exp.optional("variance_threshold_fraction")) {
      config.exposure.variance_threshold_fraction =
          as_double(*x, "variance_threshold_fraction");
    }
    exp.finish();
  }

  if (const Json* v = reader.optional("evaluator")) {
    ObjectReader ev(*v, "evaluator");
    config.backend = as_string(ev.require("backend"), "evaluator.backend");
    if (config.backend == "synthetic") {
      config.synthetic =
          synthetic_spec_from_json(ev.require("spec"), config.seed);
    } else if (config.backend == "command") {
      const Json& argv = ev.require("argv");
      if (!argv.is_array() || argv.empty()) {
        raise(Errc::validation_error, "evaluator.argv must be a nonempty array");
      }
      for (const auto& a : argv) {
        config.command.argv.push_back(as_string(a, "evaluator.argv[]"));
      }
      if (const Json* x = ev.optional("timeout_s")) {
        config.command.timeout_s = as_double(*x, "evaluator.timeout_s");
      }
      if (const Json* x = ev.optional("max_in_flight")) {
        config.command.max_in_flight = as_int(*x, "evaluator.max_in_flight");
      }
    }
    ev.finish();
  } else {
    // Default backend: synthetic responses with a shared mid-box optimum,
    // laid over the supplied fleet (or a generated 20-model one).
    for (const auto& t : config.techniques) {
      SyntheticTechniqueSpec spec;
      spec.global_center.assign(t.space.encoded_width(), 0.5);
      config.synthetic.techniques[t.id] = spec;
    }
    config.synthetic.model_count = config.fleet_given ? 0 : 20;
    config.synthetic.seed = config.seed;
  }
  reader.finish();
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  const std::string parent = std::filesystem::path(path).parent_path().string();
  return run_config_from_json(load_json_file(path),
                              parent.empty() ? "." : parent);
}

RunContext materialize_run(const RunConfig& config) {
  RunContext ctx;
  for (const auto& t : config.techniques) ctx.technique_map[t.id] = t;
  if (config.backend == "synthetic") {
    if (config.fleet_given) {
      ctx.fleet = config.fleet;
      ctx.evaluator =
          synthetic_responses(ctx.fleet, config.synthetic, ctx.technique_map);
    } else {
      auto [fleet, evaluator] =
          generate_synthetic_fleet(config.synthetic, ctx.technique_map);
      ctx.fleet = std::move(fleet);
      ctx.evaluator = std::move(evaluator);
    }
  } else {
    ctx.fleet = config.fleet;
    ctx.evaluator = std::make_shared<CommandEvaluator>(
        config.fleet, ctx.technique_map, config.command.argv,
        config.command.timeout_s, derive_seed(config.seed, "command"),
        config.command.max_in_flight);
  }
  return ctx;
}

}  // namespace fleetopt
