#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fleetopt/objective.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

// Black-box evaluation backend. Returns the raw performance P for one
// (model, technique, configuration, repeat); deltas against baselines are
// computed by the caller.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual double evaluate(const std::string& model_id,
                          const std::string& technique_id,
                          const Configuration& config, int repeat_index) = 0;
};

struct SyntheticTechniqueSpec {
  std::vector<double> global_center;       // c*, in scaled coordinates
  double center_spread = 0.0;              // per-model optimum scatter
  std::pair<double, double> peak_delta_range{0.01, 0.03};
  std::pair<double, double> curvature_range{0.05, 0.2};
  double regressor_fraction = 0.0;         // fraction with peak delta negated
  double noise_std = 0.0;
};

struct SyntheticFleetSpec {
  int model_count = 0;
  int attribute_clusters = 0;  // 0: one cluster per ~5 models
  std::map<std::string, SyntheticTechniqueSpec> techniques;
  std::uint64_t seed = 0;

  void validate() const;
};

// Quadratic bowl delta(theta) = peak - sum_k curvature[k]*(theta[k]-center[k])^2
// over scaled coordinates. Its box-constrained maximum has a closed form:
// the componentwise clamp of `center` onto [0,1].
struct QuadraticResponse {
  double peak_delta = 0.0;
  std::vector<double> curvature;
  std::vector<double> center;

  double value(const std::vector<double>& scaled) const;
  std::vector<double> box_argmax() const;  // clamp(center) onto [0,1]
  double box_max() const;                  // value at box_argmax
};

class SyntheticEvaluator final : public Evaluator {
 public:
  // Explicit response table: responses[technique_id][model_id].
  SyntheticEvaluator(
      Fleet fleet, std::map<std::string, Technique> techniques,
      std::map<std::string, std::map<std::string, QuadraticResponse>> responses,
      std::map<std::string, double> noise_std, std::uint64_t seed);

  double evaluate(const std::string& model_id, const std::string& technique_id,
                  const Configuration& config, int repeat_index) override;

  // Pure noise-free delta; the analytic ground truth used by oracles.
  double noise_free_delta(const std::string& model_id,
                          const std::string& technique_id,
                          const Configuration& config) const;

  const QuadraticResponse& response(const std::string& technique_id,
                                    const std::string& model_id) const;
  const Fleet& fleet() const { return fleet_; }
  const std::map<std::string, Technique>& techniques() const { return techniques_; }
  double noise_std(const std::string& technique_id) const;

 private:
  Fleet fleet_;
  std::map<std::string, Technique> techniques_;
  std::map<std::string, std::map<std::string, QuadraticResponse>> responses_;
  std::map<std::string, double> noise_std_;
  std::uint64_t seed_ = 0;
};

// Draws a fleet with clustered attributes plus per-(model, technique)
// quadratic responses, all determined by spec.seed.
std::pair<Fleet, std::shared_ptr<SyntheticEvaluator>> generate_synthetic_fleet(
    const SyntheticFleetSpec& spec,
    const std::map<std::string, Technique>& techniques);

// Responses drawn over an existing fleet (spec.model_count is ignored);
// the same seed and model ids yield the same responses the generator would.
std::shared_ptr<SyntheticEvaluator> synthetic_responses(
    const Fleet& fleet, const SyntheticFleetSpec& spec,
    const std::map<std::string, Technique>& techniques);

// Spawns `argv` once per evaluation. Protocol: one JSON request on stdin
// {model_id, technique_id, config: {dim: value}, repeat, seed}; one JSON
// response line on stdout, {"performance": x} or {"error": msg}.
class CommandEvaluator final : public Evaluator {
 public:
  CommandEvaluator(Fleet fleet, std::map<std::string, Technique> techniques,
                   std::vector<std::string> argv, double timeout_s = 300.0,
                   std::uint64_t seed = 0, int max_in_flight = 0);
  ~CommandEvaluator() override;

  double evaluate(const std::string& model_id, const std::string& technique_id,
                  const Configuration& config, int repeat_index) override;

 private:
  struct Pool;
  Fleet fleet_;
  std::map<std::string, Technique> techniques_;
  std::vector<std::string> argv_;
  double timeout_s_;
  std::uint64_t seed_;
  std::unique_ptr<Pool> pool_;
};

struct GridOracleResult {
  Configuration best_config;
  AggregateResult best;
  bool found_feasible = false;
  // Scaled grid coordinates with their scored results; filled only on request.
  std::vector<std::pair<std::vector<double>, AggregateResult>> table;
};

// Exhaustive scan of the aggregate objective on a regular grid (continuous
// dims get `resolution` points, integer dims enumerate their range). The
// independent optimum every optimizer run is judged against.
GridOracleResult grid_oracle(const SyntheticEvaluator& evaluator,
                             const Technique& technique, const Fleet& fleet,
                             const Thresholds& thresholds, int resolution,
                             bool include_table = true);

}  // namespace fleetopt
