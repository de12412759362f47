#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fleetopt/run_config.hpp"
#include "fleetopt/template_registry.hpp"

namespace fleetopt {

// Artifact file names inside --out-dir. Fixed so subcommands compose.
struct ArtifactPaths {
  std::string reps;
  std::string trials;
  std::string report;
  std::string sensitivity;
  std::string templates;

  explicit ArtifactPaths(const std::string& out_dir);
};

struct PipelineOptions {
  std::string out_dir = ".";
  std::string resume_path;  // optional trial log to replay before continuing
  bool quiet = false;
};

struct PipelineOutcome {
  int exit_code = 0;               // 0 ok, 2 no feasible trial anywhere, 1 error
  std::string status = "ok";       // mirrored into report.json
  std::string error;               // set when status is "failed"
  std::string summary;             // one-paragraph stdout text
};

// Full run: select-reps, mmo, sensitivity, template commit, holdout
// validation, backtest. Artifacts are written as the steps complete, so a
// failure still leaves everything computed so far on disk, plus a report
// with status "failed".
PipelineOutcome run_pipeline(const RunConfig& config,
                             const PipelineOptions& options);

// Individual steps, shared by the subcommands. Each reads what it needs
// from the artifact directory and rewrites its own outputs.
RepresentativeSet step_select_reps(const RunConfig& config, RunContext& ctx,
                                   const ArtifactPaths& paths);
MmoReport step_mmo(const RunConfig& config, RunContext& ctx,
                   const RepresentativeSet& reps, const ArtifactPaths& paths,
                   const std::string& resume_path);
std::map<std::string, SensitivityReport> step_sensitivity(
    const RunConfig& config, const std::vector<TrialRecord>& log,
    const ArtifactPaths& paths, std::map<std::string, std::string>* notes);
int step_template_commit(const RunConfig& config, const MmoReport& mmo,
                         const std::map<std::string, SensitivityReport>& sensitivity,
                         const ArtifactPaths& paths);
HoldoutReport step_holdout(const RunConfig& config, RunContext& ctx,
                           const RepresentativeSet& reps, const MmoReport& mmo,
                           const ArtifactPaths& paths);
BacktestReport step_backtest(const RunConfig& config, RunContext& ctx,
                             int version_id, const ArtifactPaths& paths);

// Human-readable summary of report.json (plus the template log when
// present). Raises missing_artifact when the report does not exist.
std::string render_report(const ArtifactPaths& paths);

// Fractions are always shown with their percent twin, e.g. "0.0063 (0.63%)".
std::string format_fraction(double value);

}  // namespace fleetopt
