#include "fleetopt/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>

#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

void diag(const std::string& message) {
  const char* level = std::getenv("FLEETOPT_LOG");
  if (level && *level) {
    std::fprintf(stderr, "[fleetopt] %s\n", message.c_str());
  }
}

Json to_json(const CostSummary& c) {
  Json j;
  j["template_evaluations"] = c.template_evaluations;
  j["model_instantiations"] = c.model_instantiations;
  j["fragmented_bound"] = c.fragmented_bound;
  return j;
}

// Pretty, key-sorted, newline-terminated; still canonical enough to diff.
void write_report_json(const std::string& path, const Json& j) {
  (void)canonical_dump(j);  // reject non-finite values up front
  write_file_atomic(path, j.dump(2) + "\n");
}

void update_report(const std::string& path,
                   const std::function<void(Json&)>& mutate) {
  Json report;
  if (std::filesystem::exists(path)) {
    report = load_json_file(path);
  } else {
    report["schema_version"] = 1;
    report["status"] = "ok";
  }
  mutate(report);
  write_report_json(path, report);
}

std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

std::string number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

// Aggregate line: value with percent twin when feasible, the fixed phrase
// otherwise. An infeasible aggregate is never rendered as a number.
std::string format_aggregate(const Json& aggregate) {
  if (!aggregate.at("feasible").get<bool>()) {
    return "infeasible (regression rate above epsilon)";
  }
  return format_fraction(aggregate.at("aggregate").get<double>());
}

}  // namespace

std::string format_fraction(double value) {
  return number(value) + " (" + percent(value) + ")";
}

ArtifactPaths::ArtifactPaths(const std::string& out_dir)
    : reps(join_path(out_dir, "reps.json")),
      trials(join_path(out_dir, "trials.jsonl")),
      report(join_path(out_dir, "report.json")),
      sensitivity(join_path(out_dir, "sensitivity.json")),
      templates(join_path(out_dir, "templates.jsonl")) {}

RepresentativeSet step_select_reps(const RunConfig& config, RunContext& ctx,
                                   const ArtifactPaths& paths) {
  const int fleet_size = static_cast<int>(ctx.fleet.size());
  std::pair<int, int> k_range;
  if (config.fixed_k > 0) {
    k_range = {config.fixed_k, config.fixed_k};
  } else {
    const int k_max =
        config.k_max > 0 ? config.k_max : std::min(fleet_size, 24);
    k_range = {config.k_min, k_max};
  }
  const RepresentativeSet reps = select_representatives(
      ctx.fleet, k_range, derive_seed(config.seed, "reps"));
  Json j = to_json(reps);
  write_file_atomic(paths.reps, j.dump(2) + "\n");
  update_report(paths.report, [&](Json& r) {
    r["representatives"] = Json{{"k", reps.k}, {"chosen_ids", reps.chosen_ids}};
  });
  diag("representatives: k=" + std::to_string(reps.k) + " of " +
       std::to_string(fleet_size));
  return reps;
}

MmoReport step_mmo(const RunConfig& config, RunContext& ctx,
                   const RepresentativeSet& reps, const ArtifactPaths& paths,
                   const std::string& resume_path) {
  MmoConfig mmo_config;
  mmo_config.iterations_per_technique = config.iterations_per_technique;
  mmo_config.thresholds = config.thresholds;
  mmo_config.seed = config.seed;
  mmo_config.acquisition = config.acquisition;
  mmo_config.evaluation_repeats = config.evaluation_repeats;

  std::vector<TrialRecord> resume_log;
  const std::vector<TrialRecord>* resume = nullptr;
  if (!resume_path.empty()) {
    resume_log = trial_log_from_jsonl(read_file(resume_path));
    resume = &resume_log;
    diag("resuming from " + resume_path + " (" +
         std::to_string(resume_log.size()) + " records)");
  }

  const Fleet rep_fleet = ctx.fleet.subset(reps.chosen_ids);
  const MmoReport report = run_mmo(config.techniques, rep_fleet,
                                   *ctx.evaluator, mmo_config, resume);
  write_file_atomic(paths.trials, trial_log_to_jsonl(report.trial_log));

  const CostSummary cost =
      iteration_cost_summary(report, static_cast<int>(ctx.fleet.size()),
                             static_cast<int>(config.techniques.size()));
  update_report(paths.report, [&](Json& r) {
    r["thresholds"] = to_json(config.thresholds);
    r["mmo"] = to_json(report);
    r["cost"] = to_json(cost);
  });
  diag("mmo: " + std::to_string(report.generalized.size()) + " admitted, " +
       std::to_string(report.rejected.size()) + " rejected, " +
       std::to_string(report.evaluation_count) + " evaluations");

  // Individual model failures are tolerated, but an evaluator that never
  // produced a single valid trial is broken, not infeasible.
  const bool any_valid =
      std::any_of(report.trial_log.begin(), report.trial_log.end(),
                  [](const TrialRecord& r) { return r.valid; });
  if (!report.trial_log.empty() && !any_valid) {
    std::string detail = "every evaluation failed";
    for (const auto& rec : report.trial_log) {
      if (!rec.failures.empty()) {
        detail = rec.failures.begin()->second;
        break;
      }
    }
    raise(Errc::evaluator_failure, "no trial completed on any model: " + detail);
  }
  return report;
}

std::map<std::string, SensitivityReport> step_sensitivity(
    const RunConfig& config, const std::vector<TrialRecord>& log,
    const ArtifactPaths& paths, std::map<std::string, std::string>* notes) {
  std::map<std::string, std::vector<TrialRecord>> per_technique;
  for (const auto& record : log) {
    per_technique[record.technique_id].push_back(record);
  }

  std::map<std::string, SensitivityReport> reports;
  std::map<std::string, std::string> local_notes;
  for (const auto& technique : config.techniques) {
    const auto it = per_technique.find(technique.id);
    if (it == per_technique.end()) continue;
    try {
      reports[technique.id] =
          classify_parameters(technique.space, it->second, config.exposure);
    } catch (const Error& e) {
      // Not enough signal to defend exposing anything: standardize all dims
      // (an empty report is the explicit marker) and record why.
      reports[technique.id] = SensitivityReport{};
      local_notes[technique.id] = e.what();
    }
  }

  Json j;
  j["schema_version"] = 1;
  Json techniques = Json::object();
  for (const auto& [id, report] : reports) techniques[id] = to_json(report);
  j["techniques"] = std::move(techniques);
  Json notes_json = Json::object();
  for (const auto& [id, note] : local_notes) notes_json[id] = note;
  j["notes"] = std::move(notes_json);
  write_file_atomic(paths.sensitivity, j.dump(2) + "\n");

  if (!local_notes.empty()) {
    update_report(paths.report, [&](Json& r) {
      Json n = Json::object();
      for (const auto& [id, note] : local_notes) n[id] = note;
      r["sensitivity_notes"] = std::move(n);
    });
  }
  if (notes) *notes = std::move(local_notes);
  diag("sensitivity: " + std::to_string(reports.size()) + " techniques classified");
  return reports;
}

int step_template_commit(const RunConfig& config, const MmoReport& mmo,
                         const std::map<std::string, SensitivityReport>& sensitivity,
                         const ArtifactPaths& paths) {
  if (mmo.generalized.empty()) {
    raise(Errc::validation_error, "no generalized techniques to commit");
  }
  TemplateRegistry registry;
  if (std::filesystem::exists(paths.templates)) {
    registry = TemplateRegistry::load(paths.templates);
  }
  std::map<std::string, Technique> defs;
  for (const auto& t : config.techniques) defs[t.id] = t;

  const std::optional<int> parent =
      registry.head() ? std::optional<int>(registry.head()->version_id)
                      : std::nullopt;
  const TemplateVersion& v = registry.commit(
      parent, mmo.generalized, defs, sensitivity,
      std::filesystem::path(paths.report).filename().string(),
      std::filesystem::path(paths.sensitivity).filename().string());
  registry.save(paths.templates);
  update_report(paths.report,
                [&](Json& r) { r["template_version"] = v.version_id; });
  diag("template: committed version " + std::to_string(v.version_id));
  return v.version_id;
}

HoldoutReport step_holdout(const RunConfig& config, RunContext& ctx,
                           const RepresentativeSet& reps, const MmoReport& mmo,
                           const ArtifactPaths& paths) {
  const HoldoutSet holdout =
      split_holdout(ctx.fleet, reps, config.holdout_fraction,
                    derive_seed(config.seed, "holdout"));
  HoldoutReport report;
  if (!holdout.holdout_ids.empty() && !mmo.generalized.empty()) {
    report = validate_holdout(mmo.generalized,
                              ctx.fleet.subset(holdout.holdout_ids),
                              *ctx.evaluator, config.thresholds);
  }
  update_report(paths.report, [&](Json& r) {
    r["holdout_models"] = holdout.holdout_ids;
    r["holdout"] = to_json(report);
  });
  diag("holdout: " + std::to_string(holdout.holdout_ids.size()) + " models, " +
       std::to_string(report.entries.size()) + " entries");
  return report;
}

BacktestReport step_backtest(const RunConfig& config, RunContext& ctx,
                             int version_id, const ArtifactPaths& paths) {
  const TemplateRegistry registry = TemplateRegistry::load(paths.templates);
  if (version_id <= 0) {
    if (!registry.head()) {
      raise(Errc::unknown_version, "template log holds no versions to backtest");
    }
    version_id = registry.head()->version_id;
  }
  const BacktestReport report =
      registry.backtest(version_id, ctx.fleet, *ctx.evaluator, config.thresholds);
  update_report(paths.report, [&](Json& r) {
    r["backtest"] = to_json(report);
    r["backtest_version"] = version_id;
  });
  diag(std::string("backtest: ") + (report.pass ? "pass" : "fail"));
  return report;
}

PipelineOutcome run_pipeline(const RunConfig& config,
                             const PipelineOptions& options) {
  PipelineOutcome outcome;
  const ArtifactPaths paths(options.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);

  // Fresh report: stale sections from previous runs must not survive.
  Json fresh;
  fresh["schema_version"] = 1;
  fresh["status"] = "ok";
  fresh["thresholds"] = to_json(config.thresholds);

  try {
    write_report_json(paths.report, fresh);
    RunContext ctx = materialize_run(config);
    const RepresentativeSet reps = step_select_reps(config, ctx, paths);
    const MmoReport mmo =
        step_mmo(config, ctx, reps, paths, options.resume_path);

    const bool all_infeasible =
        mmo.generalized.empty() && !mmo.rejected.empty() &&
        std::all_of(mmo.rejected.begin(), mmo.rejected.end(),
                    [](const RejectedTechnique& r) {
                      return r.reason == RejectionReason::infeasible_everywhere;
                    });

    const auto sensitivity =
        step_sensitivity(config, mmo.trial_log, paths, nullptr);
    int version_id = 0;
    if (!mmo.generalized.empty()) {
      version_id = step_template_commit(config, mmo, sensitivity, paths);
    }
    step_holdout(config, ctx, reps, mmo, paths);
    if (version_id > 0) {
      step_backtest(config, ctx, version_id, paths);
    }

    if (all_infeasible) {
      outcome.exit_code = 2;
      outcome.status = "no-feasible-trial";
    }
    update_report(paths.report,
                  [&](Json& r) { r["status"] = outcome.status; });
    outcome.summary = render_report(paths);
    return outcome;
  } catch (const Error& e) {
    outcome.exit_code = 1;
    outcome.status = "failed";
    outcome.error = e.what();
    try {
      update_report(paths.report, [&](Json& r) {
        r["status"] = "failed";
        r["error"] = outcome.error;
      });
    } catch (...) {
      // the report itself being unwritable must not mask the original error
    }
    outcome.summary = "run failed: " + outcome.error;
    return outcome;
  }
}

std::string render_report(const ArtifactPaths& paths) {
  const Json report = load_json_file(paths.report);
  std::ostringstream out;

  const std::string status = report.value("status", "unknown");
  out << "status: " << status << "\n";
  if (report.contains("error")) {
    out << "error: " << report.at("error").get<std::string>() << "\n";
  }
  if (report.contains("thresholds")) {
    const Json& t = report.at("thresholds");
    out << "thresholds: alpha " << number(t.value("alpha", 0.0)) << ", epsilon "
        << number(t.value("epsilon", 0.0)) << ", tau "
        << number(t.value("tau", 0.0)) << "\n";
  }
  if (report.contains("representatives")) {
    const Json& reps = report.at("representatives");
    out << "representatives: k=" << reps.at("k").get<int>() << " [";
    const Json& ids = reps.at("chosen_ids");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out << ", ";
      out << ids[i].get<std::string>();
    }
    out << "]\n";
  }

  if (report.contains("mmo")) {
    const Json& mmo = report.at("mmo");
    const Json& generalized = mmo.at("generalized");
    out << "techniques: " << generalized.size() << " admitted, "
        << mmo.at("rejected").size() << " rejected\n";
    for (const auto& g : generalized) {
      const Json& best = g.at("best");
      out << "  " << g.at("technique_id").get<std::string>() << ": admitted\n";
      out << "    theta*: " << canonical_dump(g.at("optimal_config")) << "\n";
      out << "    P*: " << format_fraction(g.at("optimal_performance").get<double>())
          << "\n";
      out << "    regression rate: " << number(best.at("regression_rate").get<double>())
          << " (epsilon " << number(best.at("epsilon").get<double>()) << ")\n";
    }
    for (const auto& r : mmo.at("rejected")) {
      out << "  " << r.at("technique_id").get<std::string>() << ": rejected ("
          << r.at("reason").get<std::string>() << ")";
      const std::string detail = r.value("detail", "");
      if (!detail.empty()) out << ": " << detail;
      out << "\n";
    }
    out << "evaluations: " << mmo.at("evaluation_count").get<long long>() << "\n";
  }
  if (report.contains("cost")) {
    const Json& c = report.at("cost");
    out << "cost: " << c.at("template_evaluations").get<long long>()
        << " template evaluations, "
        << c.at("model_instantiations").get<long long>()
        << " instantiations, fragmented bound "
        << c.at("fragmented_bound").get<long long>() << "\n";
  }
  if (report.contains("sensitivity_notes")) {
    out << "sensitivity notes:\n";
    for (const auto& [technique_id, note] :
         report.at("sensitivity_notes").items()) {
      out << "  " << technique_id << ": " << note.get<std::string>() << "\n";
    }
  }

  if (report.contains("template_version")) {
    const int version_id = report.at("template_version").get<int>();
    out << "template: version " << version_id << "\n";
    if (std::filesystem::exists(paths.templates)) {
      const TemplateRegistry registry = TemplateRegistry::load(paths.templates);
      const TemplateVersion& v = registry.version(version_id);
      if (v.parent) {
        const VersionDiff d =
            TemplateRegistry::diff(registry.version(*v.parent), v);
        out << "  vs version " << *v.parent << ": " << d.added.size()
            << " added, " << d.removed.size() << " removed, "
            << d.changed_values.size() << " value changes, "
            << d.exposure_changes.size() << " exposure changes\n";
        for (const auto& c : d.changed_values) {
          out << "    " << c.technique_id << "." << c.dim << ": "
              << canonical_dump(to_json(c.from)) << " -> "
              << canonical_dump(to_json(c.to))
              << (c.exposed ? " (exposed default)" : "") << "\n";
        }
        for (const auto& e : d.exposure_changes) {
          out << "    " << e.technique_id << "." << e.dim
              << (e.now_exposed ? ": now exposed" : ": now standardized")
              << "\n";
        }
      }
    }
  }

  if (report.contains("holdout")) {
    const Json& entries = report.at("holdout").at("entries");
    if (!entries.empty()) out << "holdout:\n";
    for (const auto& e : entries) {
      out << "  " << e.at("technique_id").get<std::string>() << ": transfer "
          << (e.at("transfer").get<bool>() ? "yes" : "no") << ", aggregate "
          << format_aggregate(e.at("aggregate")) << "\n";
    }
  }
  if (report.contains("backtest")) {
    const Json& b = report.at("backtest");
    out << "backtest: " << (b.at("pass").get<bool>() ? "pass" : "fail")
        << ", total " << format_aggregate(b.at("total")) << "\n";
    for (const auto& t : b.at("per_technique")) {
      out << "  " << t.at("technique_id").get<std::string>() << ": aggregate "
          << format_aggregate(t.at("aggregate")) << ", "
          << (t.at("pass").get<bool>() ? "pass" : "fail") << "\n";
    }
  }
  return out.str();
}

}  // namespace fleetopt
