#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fleetopt/mmo.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

enum class DimDecision { standardize, expose };

std::string to_string(DimDecision d);
DimDecision dim_decision_from_string(const std::string& s);

struct ExposurePolicy {
  // Fractions of the respective per-column maxima below which a dimension
  // counts as insensitive.
  double beta_threshold_fraction = 0.1;
  double variance_threshold_fraction = 0.1;

  void validate() const;  // both in (0, 1]
};

// Column layout of the linear design matrix: continuous and integer dims
// contribute one scaled column each; a categorical dim with v values
// contributes v-1 indicator columns (first value is the reference level, so
// the intercept stays identifiable).
struct SensitivityColumns {
  std::vector<std::string> labels;     // "dim" or "dim=value"
  std::vector<std::size_t> dim_index;  // owning dim per column
};

SensitivityColumns sensitivity_columns(const HyperparameterSpace& space);

struct LinearFit {
  double intercept = 0.0;
  std::vector<double> betas;  // one per design column
  double residual_norm = 0.0;
  int trials_used = 0;
};

// Ordinary least squares of the trial aggregate (weighted-mean delta) on the
// design columns above, feasible trials only.
LinearFit fit_linear_surrogate(const HyperparameterSpace& space,
                               const std::vector<TrialRecord>& trials);

struct PerModelFits {
  std::map<std::string, LinearFit> fits;  // per model, target = its own delta
  std::vector<double> sigma_sq;  // population variance of beta across models
  std::vector<std::pair<std::string, std::string>> excluded;  // model, reason
};

PerModelFits per_model_sensitivities(const HyperparameterSpace& space,
                                     const std::vector<TrialRecord>& trials);

struct SensitivityEntry {
  std::string dim;
  // For multi-column (categorical) dims: beta of the column with the largest
  // |beta|, variance of the column with the largest variance. The decision is
  // made per column and a dim is exposed if any of its columns is.
  double global_beta = 0.0;
  std::map<std::string, double> per_model_betas;
  double cross_model_variance = 0.0;
  DimDecision decision = DimDecision::standardize;
};

struct SensitivityReport {
  std::vector<SensitivityEntry> entries;  // one per dim, in space order
  double intercept = 0.0;
  double residual_norm = 0.0;
  int trials_used = 0;
  std::vector<std::pair<std::string, std::string>> excluded_models;
};

// Standardize-vs-expose classification: a column is standardized when its
// |beta| falls below beta_threshold_fraction of the largest |beta| AND its
// cross-model variance falls below variance_threshold_fraction of the
// largest variance; a zero maximum makes that criterion pass vacuously, so
// an all-zero fit standardizes everything.
SensitivityReport classify_parameters(const HyperparameterSpace& space,
                                      const std::vector<TrialRecord>& trials,
                                      const ExposurePolicy& policy);

}  // namespace fleetopt
