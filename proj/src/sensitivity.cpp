#include "fleetopt/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace fleetopt {

std::string to_string(DimDecision d) {
  return d == DimDecision::standardize ? "standardize" : "expose";
}

DimDecision dim_decision_from_string(const std::string& s) {
  if (s == "standardize") return DimDecision::standardize;
  if (s == "expose") return DimDecision::expose;
  raise(Errc::parse_error, "unknown decision: " + s);
}

void ExposurePolicy::validate() const {
  const auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(beta_threshold_fraction) || !in_unit(variance_threshold_fraction)) {
    raise(Errc::validation_error, "exposure thresholds must lie in (0, 1]");
  }
}

SensitivityColumns sensitivity_columns(const HyperparameterSpace& space) {
  space.validate();
  SensitivityColumns cols;
  for (std::size_t d = 0; d < space.dims.size(); ++d) {
    const Dim& dim = space.dims[d];
    if (const auto* cat = std::get_if<CategoricalDim>(&dim.kind)) {
      for (std::size_t v = 1; v < cat->values.size(); ++v) {
        cols.labels.push_back(dim.name + "=" + cat->values[v]);
        cols.dim_index.push_back(d);
      }
    } else {
      cols.labels.push_back(dim.name);
      cols.dim_index.push_back(d);
    }
  }
  return cols;
}

namespace {

double scale_numeric(const Dim& dim, const ConfigValue& value) {
  if (const auto* c = std::get_if<ContinuousDim>(&dim.kind)) {
    return c->hi == c->lo
               ? 0.0
               : (std::get<double>(value) - c->lo) / (c->hi - c->lo);
  }
  const auto& i = std::get<IntegerDim>(dim.kind);
  return i.hi == i.lo ? 0.0
                      : static_cast<double>(std::get<std::int64_t>(value) - i.lo) /
                            static_cast<double>(i.hi - i.lo);
}

// Design row without the intercept column.
void fill_row(const HyperparameterSpace& space, const Configuration& config,
              double* row) {
  std::size_t c = 0;
  for (std::size_t d = 0; d < space.dims.size(); ++d) {
    const Dim& dim = space.dims[d];
    if (const auto* cat = std::get_if<CategoricalDim>(&dim.kind)) {
      const auto& got = std::get<std::string>(config.values[d]);
      for (std::size_t v = 1; v < cat->values.size(); ++v) {
        row[c++] = got == cat->values[v] ? 1.0 : 0.0;
      }
    } else {
      row[c++] = scale_numeric(dim, config.values[d]);
    }
  }
}

std::vector<const TrialRecord*> feasible_trials(
    const std::vector<TrialRecord>& trials) {
  std::vector<const TrialRecord*> out;
  for (const auto& t : trials) {
    if (t.valid && t.aggregate.feasible) out.push_back(&t);
  }
  return out;
}

struct Design {
  Eigen::MatrixXd x;  // intercept column first
  SensitivityColumns cols;
};

Design build_design(const HyperparameterSpace& space,
                    const std::vector<const TrialRecord*>& rows) {
  Design d;
  d.cols = sensitivity_columns(space);
  const std::size_t p = d.cols.labels.size();
  if (rows.size() < p + 2) {
    raise(Errc::too_few_feasible_trials,
          "need at least " + std::to_string(p + 2) + " feasible trials, have " +
              std::to_string(rows.size()));
  }
  d.x.resize(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(p + 1));
  std::vector<double> row(p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ValidationReport rep =
        validate_configuration(space, rows[i]->config);
    if (!rep.ok()) {
      raise(Errc::invalid_configuration,
            "trial " + std::to_string(rows[i]->iteration) + ": " +
                rep.issues.front().message);
    }
    d.x(static_cast<Eigen::Index>(i), 0) = 1.0;
    fill_row(space, rows[i]->config, row.data());
    for (std::size_t j = 0; j < p; ++j) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = row[j];
    }
  }
  return d;
}

LinearFit solve_ols(const Design& design, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
  // Columns are scaled to [0,1], so a fixed threshold separates genuine
  // collinearity from rounding noise.
  qr.setThreshold(1e-10);
  if (qr.rank() < design.x.cols()) {
    const auto perm = qr.colsPermutation().indices();
    std::string names;
    for (Eigen::Index j = qr.rank(); j < design.x.cols(); ++j) {
      const Eigen::Index original = perm(j);
      if (!names.empty()) names += ", ";
      names += original == 0
                   ? "intercept"
                   : design.cols.labels[static_cast<std::size_t>(original - 1)];
    }
    raise(Errc::rank_deficient, "collinear design columns: " + names);
  }
  const Eigen::VectorXd beta = qr.solve(y);
  LinearFit fit;
  fit.intercept = beta(0);
  fit.betas.assign(beta.data() + 1, beta.data() + beta.size());
  fit.residual_norm = (y - design.x * beta).norm();
  fit.trials_used = static_cast<int>(design.x.rows());
  return fit;
}

}  // namespace

LinearFit fit_linear_surrogate(const HyperparameterSpace& space,
                               const std::vector<TrialRecord>& trials) {
  const auto rows = feasible_trials(trials);
  const Design design = build_design(space, rows);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = rows[i]->aggregate.weighted_mean;
  }
  return solve_ols(design, y);
}

PerModelFits per_model_sensitivities(const HyperparameterSpace& space,
                                     const std::vector<TrialRecord>& trials) {
  const auto rows = feasible_trials(trials);
  const Design design = build_design(space, rows);
  const std::size_t p = design.cols.labels.size();

  // The model set must be identical across records.
  std::vector<std::string> model_ids;
  for (const auto& [id, unused] : rows.front()->per_model) model_ids.push_back(id);
  for (const auto* t : rows) {
    if (t->per_model.size() != model_ids.size()) {
      raise(Errc::validation_error, "trial log rows cover different model sets");
    }
  }

  PerModelFits out;
  out.sigma_sq.assign(p, 0.0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (const auto& id : model_ids) {
    bool missing = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto it = rows[i]->per_model.find(id);
      if (it == rows[i]->per_model.end()) {
        missing = true;
        break;
      }
      y(static_cast<Eigen::Index>(i)) = it->second.delta;
    }
    if (missing) {
      out.excluded.emplace_back(id, "absent from some trial records");
      continue;
    }
    try {
      out.fits.emplace(id, solve_ols(design, y));
    } catch (const Error& e) {
      out.excluded.emplace_back(id, e.what());
    }
  }

  // Population variance across the models that produced a fit.
  const std::size_t n = out.fits.size();
  if (n > 0) {
    for (std::size_t j = 0; j < p; ++j) {
      double mean = 0.0;
      for (const auto& [id, fit] : out.fits) mean += fit.betas[j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const auto& [id, fit] : out.fits) {
        const double d = fit.betas[j] - mean;
        var += d * d;
      }
      out.sigma_sq[j] = var / static_cast<double>(n);
    }
  }
  return out;
}

SensitivityReport classify_parameters(const HyperparameterSpace& space,
                                      const std::vector<TrialRecord>& trials,
                                      const ExposurePolicy& policy) {
  policy.validate();
  const LinearFit global = fit_linear_surrogate(space, trials);
  const PerModelFits per_model = per_model_sensitivities(space, trials);
  const SensitivityColumns cols = sensitivity_columns(space);
  const std::size_t p = cols.labels.size();

  double max_beta = 0.0;
  double max_var = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    max_beta = std::max(max_beta, std::abs(global.betas[j]));
    max_var = std::max(max_var, per_model.sigma_sq[j]);
  }
  const auto column_standardized = [&](std::size_t j) {
    const bool small_beta =
        max_beta == 0.0 ||
        std::abs(global.betas[j]) < policy.beta_threshold_fraction * max_beta;
    const bool small_var =
        max_var == 0.0 ||
        per_model.sigma_sq[j] < policy.variance_threshold_fraction * max_var;
    return small_beta && small_var;
  };

  SensitivityReport report;
  report.intercept = global.intercept;
  report.residual_norm = global.residual_norm;
  report.trials_used = global.trials_used;
  report.excluded_models = per_model.excluded;

  for (std::size_t d = 0; d < space.dims.size(); ++d) {
    SensitivityEntry entry;
    entry.dim = space.dims[d].name;
    std::size_t beta_col = p;  // column with max |beta| among this dim's
    bool exposed = false;
    for (std::size_t j = 0; j < p; ++j) {
      if (cols.dim_index[j] != d) continue;
      if (beta_col == p ||
          std::abs(global.betas[j]) > std::abs(global.betas[beta_col])) {
        beta_col = j;
      }
      entry.cross_model_variance =
          std::max(entry.cross_model_variance, per_model.sigma_sq[j]);
      if (!column_standardized(j)) exposed = true;
    }
    if (beta_col < p) {
      entry.global_beta = global.betas[beta_col];
      for (const auto& [id, fit] : per_model.fits) {
        entry.per_model_betas[id] = fit.betas[beta_col];
      }
    }
    // A dim with no design column (single-value categorical) has no effect
    // to expose.
    entry.decision = exposed ? DimDecision::expose : DimDecision::standardize;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fleetopt
