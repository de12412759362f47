#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fleetopt/fleet_eval.hpp"
#include "fleetopt/mmo.hpp"
#include "fleetopt/sensitivity.hpp"
#include "fleetopt/serialization.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

struct CommandBackendConfig {
  std::vector<std::string> argv;
  double timeout_s = 300.0;
  int max_in_flight = 0;  // 0: logical core count
};

// A run is fully described by this object plus nothing else; in particular
// no field is ever seeded from the wall clock.
struct RunConfig {
  std::uint64_t seed = 0;
  Thresholds thresholds;
  std::vector<Technique> techniques;  // optimized sequentially in this order

  // Fleet comes either inline / from a file, or (synthetic backend with no
  // explicit fleet) generated together with the responses.
  Fleet fleet;
  bool fleet_given = false;

  int iterations_per_technique = 50;
  int evaluation_repeats = 1;
  AcquisitionSpec acquisition;

  int k_min = 1;
  int k_max = 0;    // 0: scan up to min(fleet size - 1, 24)
  int fixed_k = 0;  // 0: pick k by elbow
  double holdout_fraction = 0.2;

  ExposurePolicy exposure;

  std::string backend = "synthetic";  // "synthetic" | "command"
  SyntheticFleetSpec synthetic;       // spec.techniques keyed like `techniques`
  CommandBackendConfig command;

  void validate() const;
};

RunConfig run_config_from_json(const Json& j, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

// Fleet + evaluator materialized from the backend spec. For the synthetic
// backend without an inline fleet, the generator supplies both.
struct RunContext {
  Fleet fleet;
  std::shared_ptr<Evaluator> evaluator;
  std::map<std::string, Technique> technique_map;
};

RunContext materialize_run(const RunConfig& config);

}  // namespace fleetopt
