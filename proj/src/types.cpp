#include "fleetopt/types.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "fleetopt/rng.hpp"

namespace fleetopt {

std::string to_string(RankingStage v) {
  switch (v) {
    case RankingStage::retrieval: return "retrieval";
    case RankingStage::pre_ranking: return "pre_ranking";
    case RankingStage::ranking: return "ranking";
  }
  return "ranking";
}

std::string to_string(Hardware v) {
  switch (v) {
    case Hardware::cpu: return "cpu";
    case Hardware::gpu: return "gpu";
    case Hardware::mtia: return "mtia";
  }
  return "cpu";
}

std::string to_string(DataConstraint v) {
  switch (v) {
    case DataConstraint::full: return "full";
    case DataConstraint::restricted: return "restricted";
    case DataConstraint::regional: return "regional";
  }
  return "full";
}

RankingStage ranking_stage_from_string(const std::string& s) {
  if (s == "retrieval") return RankingStage::retrieval;
  if (s == "pre_ranking") return RankingStage::pre_ranking;
  if (s == "ranking") return RankingStage::ranking;
  raise(Errc::parse_error, "unknown ranking_stage '" + s + "'");
}

Hardware hardware_from_string(const std::string& s) {
  if (s == "cpu") return Hardware::cpu;
  if (s == "gpu") return Hardware::gpu;
  if (s == "mtia") return Hardware::mtia;
  raise(Errc::parse_error, "unknown hardware '" + s + "'");
}

DataConstraint data_constraint_from_string(const std::string& s) {
  if (s == "full") return DataConstraint::full;
  if (s == "restricted") return DataConstraint::restricted;
  if (s == "regional") return DataConstraint::regional;
  raise(Errc::parse_error, "unknown data_constraint '" + s + "'");
}

void ModelDescriptor::validate() const {
  if (id.empty()) raise(Errc::validation_error, "model id must be non-empty");
  if (!std::isfinite(flops) || flops <= 0.0)
    raise(Errc::validation_error, "model '" + id + "': flops must be finite and > 0");
  if (!std::isfinite(baseline_performance))
    raise(Errc::non_finite, "model '" + id + "': baseline_performance is not finite");
  if (!std::isfinite(weight)) raise(Errc::non_finite, "model '" + id + "': weight is not finite");
  if (weight < 0.0) raise(Errc::negative_weight, "model '" + id + "': weight is negative");
  if (optimization_event.empty())
    raise(Errc::validation_error, "model '" + id + "': optimization_event must be non-empty");
  if (product_surface.empty())
    raise(Errc::validation_error, "model '" + id + "': product_surface must be non-empty");
}

std::vector<double> normalize_weights(const std::vector<double>& raw) {
  if (raw.empty()) raise(Errc::empty_fleet, "no weights to normalize");
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double w = raw[i];
    if (!std::isfinite(w))
      raise(Errc::non_finite, "weight " + std::to_string(i) + " is not finite");
    if (w < 0.0)
      raise(Errc::negative_weight, "weight " + std::to_string(i) + " is negative");
    sum += w;
  }
  if (sum <= 0.0) raise(Errc::all_zero_weights, "weights sum to zero");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / sum;
  return out;
}

Fleet::Fleet(std::vector<ModelDescriptor> models) : models_(std::move(models)) {
  if (models_.empty()) raise(Errc::empty_fleet, "fleet has no models");
  std::set<std::string> seen;
  std::vector<double> raw;
  raw.reserve(models_.size());
  for (const auto& m : models_) {
    m.validate();
    if (!seen.insert(m.id).second)
      raise(Errc::validation_error, "duplicate model id '" + m.id + "'");
    raw.push_back(m.weight);
  }
  weights_ = normalize_weights(raw);
}

bool Fleet::contains(const std::string& id) const {
  return std::any_of(models_.begin(), models_.end(),
                     [&](const ModelDescriptor& m) { return m.id == id; });
}

const ModelDescriptor& Fleet::by_id(const std::string& id) const {
  return models_[index_of(id)];
}

std::size_t Fleet::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < models_.size(); ++i)
    if (models_[i].id == id) return i;
  raise(Errc::unknown_model, "no model '" + id + "' in fleet");
}

Fleet Fleet::subset(const std::vector<std::string>& ids) const {
  if (ids.empty()) raise(Errc::empty_fleet, "subset selects no models");
  std::vector<ModelDescriptor> picked;
  picked.reserve(ids.size());
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second)
      raise(Errc::validation_error, "subset lists model '" + id + "' twice");
    picked.push_back(by_id(id));
  }
  return Fleet(std::move(picked));
}

void HyperparameterSpace::validate() const {
  if (dims.empty()) raise(Errc::validation_error, "hyperparameter space has no dimensions");
  std::set<std::string> names;
  for (const auto& d : dims) {
    if (d.name.empty()) raise(Errc::validation_error, "dimension name must be non-empty");
    if (!names.insert(d.name).second)
      raise(Errc::validation_error, "duplicate dimension name '" + d.name + "'");
    if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
      if (!std::isfinite(c->lo) || !std::isfinite(c->hi))
        raise(Errc::non_finite, "dimension '" + d.name + "': bounds are not finite");
      if (!(c->lo < c->hi))
        raise(Errc::range_too_narrow,
              "dimension '" + d.name + "': lo must be strictly below hi");
    } else if (const auto* iv = std::get_if<IntegerDim>(&d.kind)) {
      if (iv->lo > iv->hi)
        raise(Errc::range_too_narrow, "dimension '" + d.name + "': lo exceeds hi");
    } else {
      const auto& cat = std::get<CategoricalDim>(d.kind);
      if (cat.values.empty())
        raise(Errc::validation_error, "dimension '" + d.name + "': no categorical values");
      std::set<std::string> vals;
      for (const auto& v : cat.values)
        if (!vals.insert(v).second)
          raise(Errc::validation_error,
                "dimension '" + d.name + "': duplicate value '" + v + "'");
    }
  }
}

std::size_t HyperparameterSpace::dim_index(const std::string& name) const {
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i].name == name) return i;
  raise(Errc::validation_error, "no dimension named '" + name + "'");
}

bool HyperparameterSpace::has_dim(const std::string& name) const {
  return std::any_of(dims.begin(), dims.end(),
                     [&](const Dim& d) { return d.name == name; });
}

std::size_t HyperparameterSpace::encoded_width() const {
  std::size_t w = 0;
  for (const auto& d : dims) {
    if (const auto* cat = std::get_if<CategoricalDim>(&d.kind))
      w += cat->values.size();
    else
      w += 1;
  }
  return w;
}

std::string value_to_string(const ConfigValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return std::to_string(*d);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

std::uint64_t config_key(const Configuration& config) {
  std::uint64_t acc = splitmix64(0x6f6c656574706f74ULL);
  for (const auto& v : config.values) {
    if (const auto* d = std::get_if<double>(&v)) {
      acc = detail::mix_one(acc, std::bit_cast<std::uint64_t>(*d));
      acc = detail::mix_one(acc, 1);
    } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
      acc = detail::mix_one(acc, static_cast<std::uint64_t>(*i));
      acc = detail::mix_one(acc, 2);
    } else {
      acc = detail::mix_one(acc, fnv1a64(std::get<std::string>(v)));
      acc = detail::mix_one(acc, 3);
    }
  }
  return acc;
}

ValidationReport validate_configuration(const HyperparameterSpace& space,
                                        const Configuration& config) {
  ValidationReport report;
  if (config.values.size() != space.dims.size()) {
    report.issues.push_back(
        {"", "configuration has " + std::to_string(config.values.size()) +
                 " values for " + std::to_string(space.dims.size()) + " dimensions"});
    return report;
  }
  for (std::size_t i = 0; i < space.dims.size(); ++i) {
    const Dim& d = space.dims[i];
    const ConfigValue& v = config.values[i];
    if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
      const auto* x = std::get_if<double>(&v);
      if (!x) {
        report.issues.push_back({d.name, "expected a real value"});
        continue;
      }
      if (!std::isfinite(*x))
        report.issues.push_back({d.name, "value is not finite"});
      else if (*x < c->lo || *x > c->hi)
        report.issues.push_back(
            {d.name, "value " + std::to_string(*x) + " outside [" +
                         std::to_string(c->lo) + ", " + std::to_string(c->hi) + "]"});
    } else if (const auto* iv = std::get_if<IntegerDim>(&d.kind)) {
      const auto* x = std::get_if<std::int64_t>(&v);
      if (!x) {
        report.issues.push_back({d.name, "expected an integer value"});
        continue;
      }
      if (*x < iv->lo || *x > iv->hi)
        report.issues.push_back(
            {d.name, "value " + std::to_string(*x) + " outside [" +
                         std::to_string(iv->lo) + ", " + std::to_string(iv->hi) + "]"});
    } else {
      const auto& cat = std::get<CategoricalDim>(d.kind);
      const auto* x = std::get_if<std::string>(&v);
      if (!x) {
        report.issues.push_back({d.name, "expected a categorical value"});
        continue;
      }
      if (std::find(cat.values.begin(), cat.values.end(), *x) == cat.values.end())
        report.issues.push_back({d.name, "value '" + *x + "' not among allowed values"});
    }
  }
  return report;
}

void Thresholds::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(epsilon) || !std::isfinite(tau))
    raise(Errc::non_finite, "thresholds must be finite");
  if (alpha < 0.0) raise(Errc::validation_error, "alpha must be >= 0");
  if (tau < 0.0) raise(Errc::validation_error, "tau must be >= 0");
  if (epsilon < 0.0 || epsilon > 1.0)
    raise(Errc::validation_error, "epsilon must lie in [0, 1]");
}

}  // namespace fleetopt
