// Python bindings. Structured data crosses the boundary as JSON text in the
// same shapes the CLI reads and writes, so a python caller and a shell
// caller see identical artifacts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "fleetopt/bayesopt.hpp"
#include "fleetopt/objective.hpp"
#include "fleetopt/pipeline.hpp"
#include "fleetopt/representative.hpp"
#include "fleetopt/run_config.hpp"
#include "fleetopt/sensitivity.hpp"
#include "fleetopt/serialization.hpp"
#include "fleetopt/types.hpp"

namespace py = pybind11;

namespace {

py::dict aggregate_py(const std::vector<double>& deltas,
                      const std::vector<double>& weights, double alpha,
                      double epsilon) {
  fleetopt::Thresholds th;
  th.alpha = alpha;
  th.epsilon = epsilon;
  const fleetopt::AggregateResult r =
      fleetopt::aggregate_delta(deltas, weights, th);
  py::dict out;
  out["weighted_mean"] = r.weighted_mean;
  out["regression_rate"] = r.regression_rate;
  out["feasible"] = r.feasible;
  out["aggregate"] = r.aggregate ? py::cast(*r.aggregate) : py::none();
  return out;
}

std::string select_representatives_py(const std::string& fleet_json, int k_min,
                                      int k_max, std::uint64_t seed) {
  const fleetopt::Fleet fleet =
      fleetopt::fleet_from_json(fleetopt::parse_json(fleet_json));
  const fleetopt::RepresentativeSet reps =
      fleetopt::select_representatives(fleet, {k_min, k_max}, seed);
  return fleetopt::canonical_dump(fleetopt::to_json(reps));
}

std::string classify_parameters_py(const std::string& space_json,
                                   const std::string& trials_jsonl,
                                   double beta_threshold_fraction,
                                   double variance_threshold_fraction) {
  const fleetopt::HyperparameterSpace space =
      fleetopt::space_from_json(fleetopt::parse_json(space_json));
  const auto log = fleetopt::trial_log_from_jsonl(trials_jsonl);
  fleetopt::ExposurePolicy policy;
  policy.beta_threshold_fraction = beta_threshold_fraction;
  policy.variance_threshold_fraction = variance_threshold_fraction;
  const fleetopt::SensitivityReport report =
      fleetopt::classify_parameters(space, log, policy);
  return fleetopt::canonical_dump(fleetopt::to_json(report));
}

py::dict run_py(const std::string& config_json, const std::string& out_dir,
                const std::string& base_dir, const std::string& resume,
                bool quiet) {
  fleetopt::PipelineOutcome outcome;
  {
    // The pipeline can run for a while; let other python threads proceed.
    py::gil_scoped_release release;
    const fleetopt::RunConfig config = fleetopt::run_config_from_json(
        fleetopt::parse_json(config_json), base_dir);
    fleetopt::PipelineOptions options;
    options.out_dir = out_dir;
    options.resume_path = resume;
    options.quiet = quiet;
    outcome = fleetopt::run_pipeline(config, options);
  }
  py::dict out;
  out["exit_code"] = outcome.exit_code;
  out["status"] = outcome.status;
  out["error"] = outcome.error;
  out["summary"] = outcome.summary;
  return out;
}

std::string render_py(const std::string& out_dir) {
  return fleetopt::render_report(fleetopt::ArtifactPaths(out_dir));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fleet-wide technique optimization: scoring, selection, pipeline.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<fleetopt::Error>(m, "Error");

  m.def("aggregate", &aggregate_py, py::arg("deltas"), py::arg("weights"),
        py::arg("alpha") = fleetopt::Thresholds{}.alpha,
        py::arg("epsilon") = fleetopt::Thresholds{}.epsilon,
        "Weighted mean delta with the regression-rate gate; 'aggregate' is "
        "None when the rate exceeds epsilon.");

  m.def("regression_rate", &fleetopt::regression_rate, py::arg("deltas"),
        py::arg("alpha"),
        "Fraction of deltas strictly below -alpha.");

  m.def("normalize_weights", &fleetopt::normalize_weights, py::arg("raw"),
        "Raw traffic weights scaled to sum to one.");

  m.def("select_representatives", &select_representatives_py,
        py::arg("fleet_json"), py::arg("k_min"), py::arg("k_max"),
        py::arg("seed"),
        "Cluster the fleet's attribute embedding and return the chosen "
        "representatives as JSON. k_min == k_max pins k.");

  m.def("classify_parameters", &classify_parameters_py, py::arg("space_json"),
        py::arg("trials_jsonl"), py::arg("beta_threshold_fraction") = 0.1,
        py::arg("variance_threshold_fraction") = 0.1,
        "Standardize-vs-expose decisions from a trial log, as JSON.");

  m.def("monte_carlo_ei", &fleetopt::monte_carlo_ei, py::arg("mean"),
        py::arg("variance"), py::arg("best"), py::arg("samples"),
        py::arg("seed"),
        "Monte Carlo expected improvement of N(mean, variance) over best.");

  m.def("run", &run_py, py::arg("config_json"), py::arg("out_dir"),
        py::arg("base_dir") = std::string("."),
        py::arg("resume") = std::string(), py::arg("quiet") = true,
        "Full pipeline run; artifacts land in out_dir. Returns exit_code, "
        "status, error and a printable summary.");

  m.def("render", &render_py, py::arg("out_dir"),
        "Human-readable summary of the artifacts in out_dir.");
}
