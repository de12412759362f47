#include "fleetopt/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrt5 = 2.23606797749978969641;
constexpr double kBaseJitter = 1e-8;
constexpr double kMaxJitter = 1e-4;
constexpr double kNoiseFloor = 1e-8;

void require_valid(const HyperparameterSpace& space, const Configuration& config) {
  auto report = validate_configuration(space, config);
  if (!report.ok()) {
    const auto& issue = report.issues.front();
    raise(Errc::invalid_configuration,
          issue.dim.empty() ? issue.message : issue.dim + ": " + issue.message);
  }
}

// Matern-5/2 with ARD lengthscales on the scaled distance.
double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                const Eigen::VectorXd& lengthscales, double signal_variance) {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    double s = (a[d] - b[d]) / lengthscales[d];
    r2 += s * s;
  }
  double r = std::sqrt(r2);
  return signal_variance * (1.0 + kSqrt5 * r + (5.0 / 3.0) * r2) * std::exp(-kSqrt5 * r);
}

struct GpParams {
  Eigen::VectorXd log_lengthscales;
  double log_signal = 0.0;
  double log_noise = std::log(1e-6);
};

struct GpEval {
  bool ok = false;
  double lml = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd chol_lower;
  Eigen::VectorXd alpha;
  double jitter = kBaseJitter;
};

Eigen::MatrixXd gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& lengthscales,
                     double signal_variance) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = signal_variance;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = matern52(x.row(i), x.row(j), lengthscales, signal_variance);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// Factorizes K + (noise + jitter) I, escalating jitter tenfold on failure.
GpEval evaluate_lml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const GpParams& p) {
  GpEval out;
  const Eigen::Index n = x.rows();
  Eigen::VectorXd lengthscales = p.log_lengthscales.array().exp();
  double signal = std::exp(p.log_signal);
  double noise = std::max(std::exp(p.log_noise), kNoiseFloor);
  Eigen::MatrixXd k = gram(x, lengthscales, signal);

  for (double jitter = kBaseJitter; jitter <= kMaxJitter * (1.0 + 1e-12); jitter *= 10.0) {
    Eigen::MatrixXd kn = k;
    kn.diagonal().array() += noise + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kn);
    if (llt.info() != Eigen::Success) continue;
    out.ok = true;
    out.jitter = jitter;
    out.chol_lower = llt.matrixL();
    out.alpha = llt.solve(y);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(out.chol_lower(i, i));
    out.lml = -0.5 * y.dot(out.alpha) - log_det -
              0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
    return out;
  }
  return out;
}

GpParams clamp_params(GpParams p) {
  for (Eigen::Index d = 0; d < p.log_lengthscales.size(); ++d)
    p.log_lengthscales[d] =
        std::clamp(p.log_lengthscales[d], std::log(1e-3), std::log(1e3));
  p.log_signal = std::clamp(p.log_signal, std::log(1e-6), std::log(1e3));
  p.log_noise = std::clamp(p.log_noise, std::log(kNoiseFloor), std::log(10.0));
  return p;
}

// Compass search: probe +/- step on every coordinate, move to the best
// improvement, halve the step when none improves.
std::pair<GpParams, double> compass_ascend(const Eigen::MatrixXd& x,
                                           const Eigen::VectorXd& y, GpParams p,
                                           int max_evals) {
  auto score = [&](const GpParams& q) { return evaluate_lml(x, y, q).lml; };
  double best = score(p);
  int evals = 1;
  double step = 0.6;
  const Eigen::Index dims = p.log_lengthscales.size();
  while (step > 5e-3 && evals < max_evals) {
    GpParams best_probe = p;
    double best_probe_lml = best;
    for (Eigen::Index c = 0; c < dims + 2 && evals < max_evals; ++c) {
      for (double dir : {+1.0, -1.0}) {
        GpParams q = p;
        if (c < dims)
          q.log_lengthscales[c] += dir * step;
        else if (c == dims)
          q.log_signal += dir * step;
        else
          q.log_noise += dir * step;
        q = clamp_params(q);
        double v = score(q);
        ++evals;
        if (v > best_probe_lml) {
          best_probe_lml = v;
          best_probe = q;
        }
      }
    }
    if (best_probe_lml > best + 1e-12) {
      best = best_probe_lml;
      p = best_probe;
    } else {
      step *= 0.5;
    }
  }
  return {p, best};
}

std::vector<int> first_primes(int count) {
  std::vector<int> primes;
  int candidate = 2;
  while (static_cast<int>(primes.size()) < count) {
    bool is_prime = true;
    for (int p : primes) {
      if (p * p > candidate) break;
      if (candidate % p == 0) {
        is_prime = false;
        break;
      }
    }
    if (is_prime) primes.push_back(candidate);
    ++candidate;
  }
  return primes;
}

double radical_inverse(std::uint64_t index, int base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double factor = inv_base;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(index % static_cast<std::uint64_t>(base)) * factor;
    index /= static_cast<std::uint64_t>(base);
    factor *= inv_base;
  }
  return value;
}

}  // namespace

std::vector<double> encode_config(const HyperparameterSpace& space,
                                  const Configuration& config) {
  require_valid(space, config);
  std::vector<double> out;
  out.reserve(space.encoded_width());
  for (std::size_t i = 0; i < space.dims.size(); ++i) {
    const Dim& d = space.dims[i];
    const ConfigValue& v = config.values[i];
    if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
      out.push_back((std::get<double>(v) - c->lo) / (c->hi - c->lo));
    } else if (const auto* iv = std::get_if<IntegerDim>(&d.kind)) {
      out.push_back(iv->hi == iv->lo
                        ? 0.0
                        : static_cast<double>(std::get<std::int64_t>(v) - iv->lo) /
                              static_cast<double>(iv->hi - iv->lo));
    } else {
      const auto& cat = std::get<CategoricalDim>(d.kind);
      const auto& val = std::get<std::string>(v);
      for (const auto& level : cat.values) out.push_back(level == val ? 1.0 : 0.0);
    }
  }
  return out;
}

Configuration decode_config(const HyperparameterSpace& space,
                            const std::vector<double>& encoded) {
  if (encoded.size() != space.encoded_width())
    raise(Errc::length_mismatch, "encoded vector has width " +
                                     std::to_string(encoded.size()) + ", expected " +
                                     std::to_string(space.encoded_width()));
  Configuration config;
  std::size_t pos = 0;
  for (const Dim& d : space.dims) {
    if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
      double u = encoded[pos++];
      config.values.emplace_back(std::clamp(c->lo + u * (c->hi - c->lo), c->lo, c->hi));
    } else if (const auto* iv = std::get_if<IntegerDim>(&d.kind)) {
      double u = encoded[pos++];
      auto v = static_cast<std::int64_t>(std::llround(
          static_cast<double>(iv->lo) + u * static_cast<double>(iv->hi - iv->lo)));
      config.values.emplace_back(std::clamp(v, iv->lo, iv->hi));
    } else {
      const auto& cat = std::get<CategoricalDim>(d.kind);
      std::size_t best = 0;
      for (std::size_t j = 1; j < cat.values.size(); ++j)
        if (encoded[pos + j] > encoded[pos + best]) best = j;
      config.values.emplace_back(cat.values[best]);
      pos += cat.values.size();
    }
  }
  return config;
}

Configuration config_from_unit(const HyperparameterSpace& space,
                               const std::vector<double>& unit) {
  if (unit.size() != space.dims.size())
    raise(Errc::length_mismatch, "unit point has " + std::to_string(unit.size()) +
                                     " coordinates for " +
                                     std::to_string(space.dims.size()) + " dims");
  Configuration config;
  for (std::size_t i = 0; i < space.dims.size(); ++i) {
    const Dim& d = space.dims[i];
    double u = std::clamp(unit[i], 0.0, std::nextafter(1.0, 0.0));
    if (const auto* c = std::get_if<ContinuousDim>(&d.kind)) {
      config.values.emplace_back(c->lo + u * (c->hi - c->lo));
    } else if (const auto* iv = std::get_if<IntegerDim>(&d.kind)) {
      auto m = static_cast<double>(iv->hi - iv->lo + 1);
      auto offset = static_cast<std::int64_t>(std::floor(u * m));
      config.values.emplace_back(
          std::min(iv->hi, iv->lo + std::max<std::int64_t>(0, offset)));
    } else {
      const auto& cat = std::get<CategoricalDim>(d.kind);
      auto idx = static_cast<std::size_t>(u * static_cast<double>(cat.values.size()));
      config.values.emplace_back(cat.values[std::min(idx, cat.values.size() - 1)]);
    }
  }
  return config;
}

int AcquisitionSpec::resolved_initial_design(const HyperparameterSpace& space) const {
  if (initial_design_size > 0) return initial_design_size;
  return std::max<int>(5, 2 * static_cast<int>(space.dims.size()));
}

void AcquisitionSpec::validate() const {
  if (mc_samples <= 0) raise(Errc::validation_error, "mc_samples must be positive");
  if (candidate_pool <= 0)
    raise(Errc::validation_error, "candidate_pool must be positive");
  if (initial_design_size < 0)
    raise(Errc::validation_error, "initial_design_size must be >= 0");
}

SurrogateModel SurrogateModel::fit(
    const HyperparameterSpace& space,
    const std::vector<std::pair<Configuration, double>>& data, std::uint64_t seed,
    int starts) {
  space.validate();
  if (starts < 1) raise(Errc::invalid_argument, "starts must be >= 1");
  std::set<std::uint64_t> distinct;
  for (const auto& [config, value] : data) {
    if (!std::isfinite(value))
      raise(Errc::non_finite, "surrogate target is not finite");
    distinct.insert(config_key(config));
  }
  if (data.size() < 2 || distinct.size() < 2)
    raise(Errc::insufficient_feasible_trials,
          "surrogate fit needs at least 2 feasible trials with distinct configurations");

  const auto n = static_cast<Eigen::Index>(data.size());
  const auto width = static_cast<Eigen::Index>(space.encoded_width());
  Eigen::MatrixXd x(n, width);
  Eigen::VectorXd y_raw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto enc = encode_config(space, data[static_cast<std::size_t>(i)].first);
    for (Eigen::Index d = 0; d < width; ++d) x(i, d) = enc[static_cast<std::size_t>(d)];
    y_raw[i] = data[static_cast<std::size_t>(i)].second;
  }

  SurrogateModel m;
  m.space_ = space;
  m.inputs_ = x;
  m.target_mean_ = y_raw.mean();
  double var = (y_raw.array() - m.target_mean_).square().mean();
  m.target_std_ = var > 0.0 ? std::sqrt(var) : 1.0;
  m.targets_std_ = (y_raw.array() - m.target_mean_) / m.target_std_;

  // Multi-start maximum likelihood. Start 0 is a fixed heuristic, start 1
  // pins the noise at the floor (important for noise-free data), the rest
  // are seeded log-uniform draws.
  GpParams best_params;
  double best_lml = -std::numeric_limits<double>::infinity();
  const int max_evals_per_start = 120;
  for (int s = 0; s < starts; ++s) {
    GpParams p;
    p.log_lengthscales = Eigen::VectorXd::Constant(width, std::log(0.3));
    if (s == 0) {
      p.log_signal = 0.0;
      p.log_noise = std::log(1e-4);
    } else if (s == 1) {
      p.log_signal = 0.0;
      p.log_noise = std::log(kNoiseFloor);
    } else {
      Rng rng(derive_seed(seed, "lml-start", s));
      for (Eigen::Index d = 0; d < width; ++d)
        p.log_lengthscales[d] = rng.next_uniform(std::log(0.03), std::log(3.0));
      p.log_signal = rng.next_uniform(std::log(0.1), std::log(5.0));
      p.log_noise = rng.next_uniform(std::log(kNoiseFloor), std::log(0.5));
    }
    p = clamp_params(p);
    auto [ascended, lml] = compass_ascend(x, m.targets_std_, p, max_evals_per_start);
    if (lml > best_lml) {
      best_lml = lml;
      best_params = ascended;
    }
  }

  GpEval final_eval = evaluate_lml(x, m.targets_std_, best_params);
  if (!final_eval.ok)
    raise(Errc::singular_gram,
          "kernel Gram matrix is not positive definite even at jitter 1e-4");

  m.lengthscales_ = best_params.log_lengthscales.array().exp();
  m.signal_variance_std_ = std::exp(best_params.log_signal);
  m.noise_variance_std_ = std::max(std::exp(best_params.log_noise), kNoiseFloor);
  m.jitter_ = final_eval.jitter;
  m.chol_lower_ = std::move(final_eval.chol_lower);
  m.alpha_ = std::move(final_eval.alpha);
  m.lml_ = final_eval.lml;
  return m;
}

double SurrogateModel::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return matern52(a, b, lengthscales_, signal_variance_std_);
}

std::pair<double, double> SurrogateModel::posterior(const Configuration& config) const {
  auto enc = encode_config(space_, config);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(enc.data(),
                                                        static_cast<Eigen::Index>(enc.size()));
  return posterior_encoded(x);
}

std::pair<double, double> SurrogateModel::posterior_encoded(const Eigen::VectorXd& x) const {
  const Eigen::Index n = inputs_.rows();
  Eigen::VectorXd kstar(n);
  for (Eigen::Index i = 0; i < n; ++i) kstar[i] = kernel(x, inputs_.row(i));
  double mean_std = kstar.dot(alpha_);
  Eigen::VectorXd w = chol_lower_.triangularView<Eigen::Lower>().solve(kstar);
  double var_std = signal_variance_std_ - w.squaredNorm();
  var_std = std::max(var_std, 0.0);
  return {target_mean_ + target_std_ * mean_std, target_std_ * target_std_ * var_std};
}

double SurrogateModel::prior_variance() const {
  return signal_variance_std_ * target_std_ * target_std_;
}

double SurrogateModel::noise_variance() const {
  return noise_variance_std_ * target_std_ * target_std_;
}

double SurrogateModel::signal_variance() const {
  return signal_variance_std_ * target_std_ * target_std_;
}

SurrogateModel fit_surrogate(
    const std::vector<std::pair<Configuration, AggregateResult>>& trials,
    const HyperparameterSpace& space, std::uint64_t seed, int starts) {
  std::vector<std::pair<Configuration, double>> feasible;
  for (const auto& [config, result] : trials)
    if (result.feasible && result.aggregate.has_value())
      feasible.emplace_back(config, *result.aggregate);
  if (feasible.size() < 2)
    raise(Errc::insufficient_feasible_trials,
          "only " + std::to_string(feasible.size()) + " feasible trials; need 2");
  return SurrogateModel::fit(space, feasible, seed, starts);
}

FeasibilityModel::FeasibilityModel(
    const HyperparameterSpace& space,
    const std::vector<std::pair<Configuration, bool>>& labeled, int k)
    : space_(space), k_(k) {
  if (k < 1) raise(Errc::invalid_argument, "neighbor count must be >= 1");
  const auto n = static_cast<Eigen::Index>(labeled.size());
  const auto width = static_cast<Eigen::Index>(space.encoded_width());
  inputs_.resize(n, width);
  labels_.reserve(labeled.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto enc = encode_config(space, labeled[static_cast<std::size_t>(i)].first);
    for (Eigen::Index d = 0; d < width; ++d)
      inputs_(i, d) = enc[static_cast<std::size_t>(d)];
    labels_.push_back(labeled[static_cast<std::size_t>(i)].second);
  }
}

double FeasibilityModel::probability(const Configuration& config) const {
  auto enc = encode_config(space_, config);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(enc.data(),
                                                        static_cast<Eigen::Index>(enc.size()));
  return probability_encoded(x);
}

double FeasibilityModel::probability_encoded(const Eigen::VectorXd& x) const {
  const auto n = static_cast<std::size_t>(inputs_.rows());
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k_), n);
  if (kk == 0) return 0.5;  // no evidence yet
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = (inputs_.row(static_cast<Eigen::Index>(i)).transpose() - x).squaredNorm();
    dist.emplace_back(d, i);
  }
  // (distance, insertion index) ordering keeps neighbor choice deterministic.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                    dist.end());
  std::size_t feasible = 0;
  for (std::size_t i = 0; i < kk; ++i)
    if (labels_[dist[i].second]) ++feasible;
  return (static_cast<double>(feasible) + 1.0) / (static_cast<double>(kk) + 2.0);
}

double monte_carlo_ei(double mean, double variance, double best, int samples,
                      std::uint64_t seed) {
  if (samples <= 0) raise(Errc::invalid_argument, "samples must be positive");
  if (variance <= 0.0) return std::max(mean - best, 0.0);
  const double sd = std::sqrt(variance);
  // Randomized quasi-Monte Carlo: a seeded shift of the stratified grid fed
  // through the inverse normal CDF. Same draw count as naive sampling but
  // with integration error that shrinks like 1/n instead of 1/sqrt(n).
  Rng rng(seed);
  const double shift = rng.next_u01();
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    double u = (static_cast<double>(i) + shift) / static_cast<double>(samples);
    double z = inverse_normal_cdf(std::clamp(u, 1e-16, 1.0 - 1e-16));
    acc += std::max(mean + sd * z - best, 0.0);
  }
  return acc / static_cast<double>(samples);
}

Configuration acquire(const SurrogateModel& model, const FeasibilityModel& feasibility,
                      const HyperparameterSpace& space, double incumbent_best,
                      const AcquisitionSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t dims = space.dims.size();
  auto primes = first_primes(static_cast<int>(dims));
  std::vector<double> shift(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    Rng rng(derive_seed(seed, "halton-shift", d));
    shift[d] = rng.next_u01();
  }

  Configuration best_config;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> unit(dims);
  for (int i = 0; i < spec.candidate_pool; ++i) {
    for (std::size_t d = 0; d < dims; ++d) {
      double u = radical_inverse(static_cast<std::uint64_t>(i) + 1, primes[d]) + shift[d];
      unit[d] = u - std::floor(u);
    }
    Configuration candidate = config_from_unit(space, unit);
    auto enc = encode_config(space, candidate);
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
        enc.data(), static_cast<Eigen::Index>(enc.size()));
    auto [mu, var] = model.posterior_encoded(x);
    double ei = monte_carlo_ei(mu, var, incumbent_best, spec.mc_samples,
                               derive_seed(seed, "acq-ei", i));
    double score = ei * feasibility.probability_encoded(x);
    if (score > best_score) {  // strict: ties keep the lowest candidate index
      best_score = score;
      best_config = candidate;
    }
  }
  return best_config;
}

std::vector<Configuration> initial_design(const HyperparameterSpace& space, int n,
                                          std::uint64_t seed) {
  space.validate();
  if (n < 1) raise(Errc::invalid_argument, "design size must be >= 1");
  const std::size_t dims = space.dims.size();
  const auto count = static_cast<std::size_t>(n);

  // One column of unit coordinates per dim, stratified and shuffled per dim.
  std::vector<std::vector<double>> unit(dims, std::vector<double>(count));
  std::vector<std::vector<std::string>> cat_values(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    if (const auto* cat = std::get_if<CategoricalDim>(&space.dims[d].kind)) {
      std::vector<std::string> order = cat->values;
      Rng rng(derive_seed(seed, "design-cycle", d));
      rng.shuffle(order);
      for (std::size_t i = 0; i < count; ++i)
        cat_values[d].push_back(order[i % order.size()]);
      continue;
    }
    std::vector<std::size_t> strata(count);
    for (std::size_t i = 0; i < count; ++i) strata[i] = i;
    Rng perm_rng(derive_seed(seed, "design-perm", d));
    perm_rng.shuffle(strata);
    Rng jitter_rng(derive_seed(seed, "design-jitter", d));
    for (std::size_t i = 0; i < count; ++i)
      unit[d][i] = (static_cast<double>(strata[i]) + jitter_rng.next_u01()) /
                   static_cast<double>(count);
  }

  std::vector<Configuration> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Configuration config;
    for (std::size_t d = 0; d < dims; ++d) {
      if (!cat_values[d].empty()) {
        config.values.emplace_back(cat_values[d][i]);
        continue;
      }
      const Dim& dim = space.dims[d];
      double u = unit[d][i];
      if (const auto* c = std::get_if<ContinuousDim>(&dim.kind)) {
        config.values.emplace_back(c->lo + u * (c->hi - c->lo));
      } else {
        const auto& iv = std::get<IntegerDim>(dim.kind);
        auto m = static_cast<double>(iv.hi - iv.lo + 1);
        auto offset = static_cast<std::int64_t>(std::floor(u * m));
        config.values.emplace_back(
            std::min(iv.hi, iv.lo + std::max<std::int64_t>(0, offset)));
      }
    }
    out.push_back(std::move(config));
  }
  return out;
}

}  // namespace fleetopt
