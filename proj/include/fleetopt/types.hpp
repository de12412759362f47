#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "fleetopt/errors.hpp"

namespace fleetopt {

// Categorical model attributes. Values mirror the deployment metadata the
// clustering features are built from; parsing is strict.
enum class RankingStage { retrieval, pre_ranking, ranking };
enum class Hardware { cpu, gpu, mtia };
enum class DataConstraint { full, restricted, regional };

std::string to_string(RankingStage v);
std::string to_string(Hardware v);
std::string to_string(DataConstraint v);
RankingStage ranking_stage_from_string(const std::string& s);
Hardware hardware_from_string(const std::string& s);
DataConstraint data_constraint_from_string(const std::string& s);

struct ModelDescriptor {
  std::string id;
  RankingStage ranking_stage = RankingStage::ranking;
  Hardware hardware = Hardware::cpu;
  std::string optimization_event = "engagement";
  std::string product_surface = "feed";
  DataConstraint data_constraint = DataConstraint::full;
  double flops = 1.0;  // per-example inference cost, > 0
  double baseline_performance = 0.0;
  double weight = 1.0;  // raw traffic weight, >= 0

  void validate() const;
};

// Raw weights -> normalized weights summing to 1. Rejects negatives,
// non-finite entries and the all-zero vector.
std::vector<double> normalize_weights(const std::vector<double>& raw);

class Fleet {
 public:
  Fleet() = default;
  explicit Fleet(std::vector<ModelDescriptor> models);

  const std::vector<ModelDescriptor>& models() const { return models_; }
  const std::vector<double>& normalized_weights() const { return weights_; }
  std::size_t size() const { return models_.size(); }
  bool contains(const std::string& id) const;
  const ModelDescriptor& by_id(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;

  // Sub-fleet restricted to `ids`; weights are re-normalized over the subset.
  Fleet subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<ModelDescriptor> models_;
  std::vector<double> weights_;
};

struct ContinuousDim {
  double lo = 0.0;
  double hi = 1.0;
};

struct IntegerDim {
  std::int64_t lo = 0;
  std::int64_t hi = 1;
};

struct CategoricalDim {
  std::vector<std::string> values;
};

struct Dim {
  std::string name;
  std::variant<ContinuousDim, IntegerDim, CategoricalDim> kind;
};

struct HyperparameterSpace {
  std::vector<Dim> dims;

  void validate() const;
  std::size_t dim_index(const std::string& name) const;
  bool has_dim(const std::string& name) const;
  // Width of the scaled numeric embedding (categoricals one-hot over all values).
  std::size_t encoded_width() const;
};

using ConfigValue = std::variant<double, std::int64_t, std::string>;

std::string value_to_string(const ConfigValue& v);

// A point in a technique's hyperparameter space; values are positional,
// aligned with HyperparameterSpace::dims.
struct Configuration {
  std::vector<ConfigValue> values;

  bool operator==(const Configuration&) const = default;
};

// Order- and value-sensitive 64-bit key. Doubles hash by bit pattern, so
// any representable change to a value changes the key.
std::uint64_t config_key(const Configuration& config);

struct ValidationIssue {
  std::string dim;  // empty for structural issues
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

// Structural + range check of a configuration against a space. Reports all
// problems instead of throwing; callers that need an exception wrap it.
ValidationReport validate_configuration(const HyperparameterSpace& space,
                                        const Configuration& config);

struct Technique {
  std::string id;
  HyperparameterSpace space;
  // Which evaluation backend serves this technique; resolved by the runner.
  std::string evaluator_binding = "default";
};

struct Thresholds {
  double alpha = 0.0005;    // per-model regression tolerance (fraction, not percent)
  double epsilon = 0.1;     // max tolerated regression rate
  double tau = 0.0005;      // admission threshold on the aggregate

  void validate() const;
};

}  // namespace fleetopt
