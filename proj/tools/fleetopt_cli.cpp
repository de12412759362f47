#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fleetopt/pipeline.hpp"
#include "fleetopt/run_config.hpp"
#include "fleetopt/template_registry.hpp"

using namespace fleetopt;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
};

RunConfig load_config(const GlobalArgs& g) {
  if (g.config_path.empty()) {
    raise(Errc::invalid_argument, "--config is required for this command");
  }
  RunConfig config = load_run_config(g.config_path);
  if (g.seed_given) config.seed = g.seed;
  return config;
}

void say(const GlobalArgs& g, const std::string& line) {
  if (!g.quiet) std::cout << line << "\n";
}

MmoReport mmo_section(const ArtifactPaths& paths) {
  const Json report = load_json_file(paths.report);
  if (!report.contains("mmo")) {
    raise(Errc::missing_artifact,
          paths.report + " has no mmo section; run `fleetopt mmo` first");
  }
  return mmo_report_from_json(report.at("mmo"));
}

std::map<std::string, SensitivityReport> sensitivity_section(
    const ArtifactPaths& paths) {
  const Json j = load_json_file(paths.sensitivity);
  std::map<std::string, SensitivityReport> out;
  for (const auto& [id, report] : j.at("techniques").items()) {
    out[id] = sensitivity_report_from_json(report);
  }
  return out;
}

RepresentativeSet reps_artifact_or_fresh(const RunConfig& config,
                                         RunContext& ctx,
                                         const ArtifactPaths& paths) {
  if (std::filesystem::exists(paths.reps)) {
    return representative_set_from_json(load_json_file(paths.reps));
  }
  return step_select_reps(config, ctx, paths);
}

// "technique.dim=value", with the value coerced to the dim's kind when the
// version exposes it; unknown targets parse literally and fail downstream
// with the precise registry error.
void add_override(const TemplateVersion& version, const std::string& arg,
                  TechniqueOverrides& overrides) {
  const auto dot = arg.find('.');
  const auto eq = arg.find('=');
  if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
    raise(Errc::invalid_argument,
          "--set expects technique.dim=value, got '" + arg + "'");
  }
  const std::string technique_id = arg.substr(0, dot);
  const std::string dim = arg.substr(dot + 1, eq - dot - 1);
  const std::string raw = arg.substr(eq + 1);

  const DimBounds* bounds = nullptr;
  for (const auto& e : version.exposed_params) {
    if (e.technique_id == technique_id && e.dim == dim) {
      bounds = &e.bounds;
      break;
    }
  }

  ConfigValue value;
  std::size_t consumed = 0;
  if (bounds && std::holds_alternative<CategoricalDim>(*bounds)) {
    value = raw;
  } else if (bounds && std::holds_alternative<IntegerDim>(*bounds)) {
    try {
      value = static_cast<std::int64_t>(std::stoll(raw, &consumed));
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != raw.size()) {
      raise(Errc::invalid_argument,
            "'" + raw + "' is not an integer for " + technique_id + "." + dim);
    }
  } else {
    // Continuous, or not exposed at all: best-effort literal parse.
    try {
      value = std::stod(raw, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != raw.size()) value = raw;
  }
  overrides[technique_id][dim] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint hyperparameter optimization across a model fleet"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  auto* seed_opt = app.add_option("--seed", g.seed, "override the run seed");
  app.add_option("--config", g.config_path, "run configuration (JSON)");
  app.add_option("--out-dir", g.out_dir, "directory artifacts are written to");
  app.add_flag("--quiet", g.quiet, "suppress status lines");

  auto* reps_cmd =
      app.add_subcommand("select-reps", "pick representative models");
  std::string fleet_path, reps_out;
  int k_min = 0, k_max = 0, fixed_k = 0;
  reps_cmd->add_option("--fleet", fleet_path, "fleet JSON (bypasses --config)");
  auto* k_min_opt = reps_cmd->add_option("--k-min", k_min, "smallest k scanned");
  auto* k_max_opt = reps_cmd->add_option("--k-max", k_max, "largest k scanned");
  auto* fixed_k_opt = reps_cmd->add_option("--fixed-k", fixed_k, "pin k, skip the elbow");
  reps_cmd->add_option("--out", reps_out, "representatives artifact path");

  auto* mmo_cmd = app.add_subcommand("mmo", "optimize techniques over the representatives");
  std::string resume_path, trials_out, report_out;
  mmo_cmd->add_option("--resume", resume_path, "trial log to replay before continuing");
  mmo_cmd->add_option("--log", trials_out, "trial log artifact path");
  mmo_cmd->add_option("--out", report_out, "report artifact path");

  auto* sens_cmd = app.add_subcommand("sensitivity", "classify dims as standardize vs expose");
  std::string sens_log, sens_out;
  sens_cmd->add_option("--log", sens_log, "trial log to analyze");
  sens_cmd->add_option("--out", sens_out, "sensitivity artifact path");

  auto* holdout_cmd = app.add_subcommand("holdout", "validate theta* on held-out models");

  auto* backtest_cmd = app.add_subcommand("backtest", "score a committed version on the full fleet");
  int backtest_version = 0;
  backtest_cmd->add_option("--version", backtest_version, "version id (default: head)");

  auto* template_cmd = app.add_subcommand("template", "versioned template registry");
  template_cmd->require_subcommand(1);
  auto* commit_cmd = template_cmd->add_subcommand("commit", "commit the current run as a version");
  auto* inst_cmd = template_cmd->add_subcommand("instantiate", "resolve configs for one model");
  std::string inst_model, inst_out, inst_inputs;
  int inst_version = 0;
  std::vector<std::string> inst_sets;
  inst_cmd->add_option("--model", inst_model, "model id")->required();
  auto* inst_version_opt = inst_cmd->add_option("--version", inst_version, "version id (default: head)");
  inst_cmd->add_option("--set", inst_sets, "override, technique.dim=value");
  inst_cmd->add_option("--model-inputs", inst_inputs, "opaque payload stored on the instance");
  inst_cmd->add_option("--out", inst_out, "write the instance here instead of stdout");
  auto* diff_cmd = template_cmd->add_subcommand("diff", "compare two versions");
  int diff_from = 0, diff_to = 0;
  diff_cmd->add_option("--from", diff_from, "older version id")->required();
  diff_cmd->add_option("--to", diff_to, "newer version id")->required();

  auto* run_cmd = app.add_subcommand("run", "full pipeline");
  std::string run_resume;
  run_cmd->add_option("--resume", run_resume, "trial log to replay before continuing");

  auto* render_cmd = app.add_subcommand("render", "print a human-readable report");

  CLI11_PARSE(app, argc, argv);
  g.seed_given = seed_opt->count() > 0;

  try {
    ArtifactPaths paths(g.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(g.out_dir, ec);

    if (app.got_subcommand(reps_cmd)) {
      RunConfig config;
      Fleet fleet;
      if (!fleet_path.empty()) {
        fleet = fleet_from_json(load_json_file(fleet_path));
        if (g.seed_given) config.seed = g.seed;
      } else {
        config = load_config(g);
        fleet = materialize_run(config).fleet;
      }
      if (k_min_opt->count()) config.k_min = k_min;
      if (k_max_opt->count()) config.k_max = k_max;
      if (fixed_k_opt->count()) config.fixed_k = fixed_k;
      if (!reps_out.empty()) paths.reps = reps_out;
      RunContext ctx{std::move(fleet), nullptr, {}};
      const RepresentativeSet reps = step_select_reps(config, ctx, paths);
      say(g, "selected " + std::to_string(reps.k) + " representatives -> " + paths.reps);
      return 0;
    }

    if (app.got_subcommand(mmo_cmd)) {
      const RunConfig config = load_config(g);
      RunContext ctx = materialize_run(config);
      if (!trials_out.empty()) paths.trials = trials_out;
      if (!report_out.empty()) paths.report = report_out;
      const RepresentativeSet reps = reps_artifact_or_fresh(config, ctx, paths);
      const MmoReport report = step_mmo(config, ctx, reps, paths, resume_path);
      say(g, std::to_string(report.generalized.size()) + " generalized, " +
                 std::to_string(report.rejected.size()) + " rejected -> " +
                 paths.trials);
      return 0;
    }

    if (app.got_subcommand(sens_cmd)) {
      const RunConfig config = load_config(g);
      if (!sens_log.empty()) paths.trials = sens_log;
      if (!sens_out.empty()) paths.sensitivity = sens_out;
      const auto log = trial_log_from_jsonl(read_file(paths.trials));
      const auto reports = step_sensitivity(config, log, paths, nullptr);
      say(g, std::to_string(reports.size()) + " techniques classified -> " +
                 paths.sensitivity);
      return 0;
    }

    if (app.got_subcommand(holdout_cmd)) {
      const RunConfig config = load_config(g);
      RunContext ctx = materialize_run(config);
      const RepresentativeSet reps =
          representative_set_from_json(load_json_file(paths.reps));
      const MmoReport mmo = mmo_section(paths);
      const HoldoutReport report = step_holdout(config, ctx, reps, mmo, paths);
      say(g, std::to_string(report.entries.size()) + " holdout entries -> " +
                 paths.report);
      return 0;
    }

    if (app.got_subcommand(backtest_cmd)) {
      const RunConfig config = load_config(g);
      RunContext ctx = materialize_run(config);
      const BacktestReport report =
          step_backtest(config, ctx, backtest_version, paths);
      say(g, std::string("backtest ") + (report.pass ? "pass" : "fail") +
                 " -> " + paths.report);
      return report.pass ? 0 : 1;
    }

    if (app.got_subcommand(template_cmd)) {
      if (template_cmd->got_subcommand(commit_cmd)) {
        const RunConfig config = load_config(g);
        const MmoReport mmo = mmo_section(paths);
        const auto sensitivity = sensitivity_section(paths);
        const int version = step_template_commit(config, mmo, sensitivity, paths);
        say(g, "committed version " + std::to_string(version) + " -> " +
                   paths.templates);
        return 0;
      }
      if (template_cmd->got_subcommand(inst_cmd)) {
        const TemplateRegistry registry = TemplateRegistry::load(paths.templates);
        if (!inst_version_opt->count()) {
          if (!registry.head()) {
            raise(Errc::unknown_version, "the registry holds no versions");
          }
          inst_version = registry.head()->version_id;
        }
        TechniqueOverrides overrides;
        for (const auto& s : inst_sets) {
          add_override(registry.version(inst_version), s, overrides);
        }
        ModelDescriptor model;
        model.id = inst_model;
        if (!g.config_path.empty()) {
          const RunConfig config = load_config(g);
          model = config.fleet.subset({inst_model}).models()[0];
        }
        const ModelInstance instance =
            registry.instantiate(inst_version, model, overrides, inst_inputs);
        const Json j = to_json(instance);
        if (inst_out.empty()) {
          std::cout << canonical_dump(j) << "\n";
        } else {
          write_file_atomic(inst_out, j.dump(2) + "\n");
          say(g, "instantiated " + inst_model + " -> " + inst_out);
        }
        return 0;
      }
      const TemplateRegistry registry = TemplateRegistry::load(paths.templates);
      const VersionDiff d = TemplateRegistry::diff(registry.version(diff_from),
                                                   registry.version(diff_to));
      std::cout << canonical_dump(to_json(d)) << "\n";
      return 0;
    }

    if (app.got_subcommand(run_cmd)) {
      const RunConfig config = load_config(g);
      PipelineOptions options;
      options.out_dir = g.out_dir;
      options.resume_path = run_resume;
      options.quiet = g.quiet;
      const PipelineOutcome outcome = run_pipeline(config, options);
      if (outcome.exit_code == 1) {
        std::cerr << "fleetopt: " << outcome.error << "\n";
      } else {
        say(g, outcome.summary);
      }
      return outcome.exit_code;
    }

    if (app.got_subcommand(render_cmd)) {
      std::cout << render_report(paths);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "fleetopt: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fleetopt: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
