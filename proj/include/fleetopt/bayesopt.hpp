#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "fleetopt/objective.hpp"
#include "fleetopt/types.hpp"

namespace fleetopt {

// Configuration -> numeric vector: continuous and integer dims min-max
// scaled to [0,1], categorical dims one-hot. Width = space.encoded_width().
std::vector<double> encode_config(const HyperparameterSpace& space,
                                  const Configuration& config);

// Inverse of encode_config up to rounding: integers recover exactly,
// continuous values to (hi-lo)*1e-12, categoricals take the hottest block
// entry (ties to the first).
Configuration decode_config(const HyperparameterSpace& space,
                            const std::vector<double>& encoded);

// Map a point of the unit hypercube (one coordinate per raw dim) to a valid
// Configuration. Integer and categorical cells partition [0,1) evenly.
Configuration config_from_unit(const HyperparameterSpace& space,
                               const std::vector<double>& unit);

struct AcquisitionSpec {
  int mc_samples = 256;
  int candidate_pool = 1024;
  // 0 means "derive from the space": max(5, 2 * raw dim count).
  int initial_design_size = 0;

  int resolved_initial_design(const HyperparameterSpace& space) const;
  void validate() const;
};

class SurrogateModel {
 public:
  // Gaussian process with a Matern-5/2 ARD kernel. Targets are standardized
  // internally; kernel hyperparameters maximize the log marginal likelihood
  // via seeded multi-start compass search in log space.
  static SurrogateModel fit(const HyperparameterSpace& space,
                            const std::vector<std::pair<Configuration, double>>& data,
                            std::uint64_t seed, int starts = 16);

  std::pair<double, double> posterior(const Configuration& config) const;
  std::pair<double, double> posterior_encoded(const Eigen::VectorXd& x) const;

  double prior_mean() const { return target_mean_; }
  double prior_variance() const;
  double log_marginal_likelihood() const { return lml_; }
  double noise_variance() const;  // on the original target scale
  double signal_variance() const;
  const Eigen::VectorXd& lengthscales() const { return lengthscales_; }
  int training_count() const { return static_cast<int>(inputs_.rows()); }
  double target_std() const { return target_std_; }
  double jitter() const { return jitter_; }

 private:
  SurrogateModel() = default;

  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

  HyperparameterSpace space_;
  Eigen::MatrixXd inputs_;       // n x D encoded
  Eigen::VectorXd targets_std_;  // standardized targets
  Eigen::VectorXd alpha_;        // (K + noise I)^-1 y
  Eigen::MatrixXd chol_lower_;
  Eigen::VectorXd lengthscales_;
  double signal_variance_std_ = 1.0;
  double noise_variance_std_ = 1e-8;
  double jitter_ = 1e-8;
  double target_mean_ = 0.0;
  double target_std_ = 1.0;
  double lml_ = 0.0;
};

// Filters to feasible trials and fits the GP on their aggregates.
SurrogateModel fit_surrogate(
    const std::vector<std::pair<Configuration, AggregateResult>>& trials,
    const HyperparameterSpace& space, std::uint64_t seed, int starts = 16);

// Smoothed k-nearest-neighbor estimate of P(feasible | theta); predictions
// stay inside (0,1) by Laplace smoothing even for unanimous labels.
class FeasibilityModel {
 public:
  FeasibilityModel() = default;
  FeasibilityModel(const HyperparameterSpace& space,
                   const std::vector<std::pair<Configuration, bool>>& labeled,
                   int k = 5);

  double probability(const Configuration& config) const;
  double probability_encoded(const Eigen::VectorXd& x) const;
  int neighbor_count() const { return k_; }

 private:
  HyperparameterSpace space_;
  Eigen::MatrixXd inputs_;
  std::vector<bool> labels_;
  int k_ = 5;
};

// Monte Carlo expected improvement of N(mean, variance) over `best`,
// antithetic draws from the given stream. variance <= 0 collapses to the
// exact hinge max(mean - best, 0).
double monte_carlo_ei(double mean, double variance, double best, int samples,
                      std::uint64_t seed);

// Scores a quasi-random candidate pool by MC-EI times P(feasible) and
// returns the argmax (ties to the lowest candidate index).
Configuration acquire(const SurrogateModel& model,
                      const FeasibilityModel& feasibility,
                      const HyperparameterSpace& space, double incumbent_best,
                      const AcquisitionSpec& spec, std::uint64_t seed);

// Latin hypercube over continuous/integer dims (integer cells partition the
// strata exactly, so balance is exact whenever the range divides n);
// categorical values cycle through a seeded per-dim permutation.
std::vector<Configuration> initial_design(const HyperparameterSpace& space,
                                          int n, std::uint64_t seed);

}  // namespace fleetopt
