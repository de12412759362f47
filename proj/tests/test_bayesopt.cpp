#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fleetopt/bayesopt.hpp"
#include "fleetopt/rng.hpp"
#include "support/oracles.hpp"

using namespace fleetopt;

namespace {

HyperparameterSpace one_continuous(double lo = 0.0, double hi = 1.0) {
  HyperparameterSpace s;
  s.dims = {{"x", ContinuousDim{lo, hi}}};
  return s;
}

HyperparameterSpace mixed_space() {
  HyperparameterSpace s;
  s.dims = {{"lr", ContinuousDim{1e-4, 1e-1}},
            {"layers", IntegerDim{1, 6}},
            {"act", CategoricalDim{{"relu", "gelu", "tanh"}}}};
  return s;
}

// Matern-5/2 written independently for the oracle computations.
double matern_ref(const std::vector<double>& a, const std::vector<double>& b,
                  const std::vector<double>& ls, double sig) {
  double r2 = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    double s = (a[d] - b[d]) / ls[d];
    r2 += s * s;
  }
  double r = std::sqrt(r2);
  const double c = std::sqrt(5.0);
  return sig * (1.0 + c * r + 5.0 / 3.0 * r2) * std::exp(-c * r);
}

std::vector<std::pair<Configuration, double>> sample_1d(
    double (*f)(double), const std::vector<double>& xs) {
  std::vector<std::pair<Configuration, double>> data;
  for (double x : xs) data.push_back({Configuration{{x}}, f(x)});
  return data;
}

double smooth_fn(double x) { return 0.3 * std::sin(3.0 * x) + 0.1 * x; }

}  // namespace

TEST_CASE("encode_config scaling identities") {
  HyperparameterSpace s;
  s.dims = {{"x", ContinuousDim{0.0, 10.0}}};
  CHECK(encode_config(s, Configuration{{5.0}})[0] == doctest::Approx(0.5));
  CHECK(encode_config(s, Configuration{{0.0}})[0] == 0.0);
  CHECK(encode_config(s, Configuration{{10.0}})[0] == 1.0);

  HyperparameterSpace cat;
  cat.dims = {{"c", CategoricalDim{{"a", "b", "c"}}}};
  auto enc = encode_config(cat, Configuration{{std::string("b")}});
  CHECK(enc == std::vector<double>{0.0, 1.0, 0.0});

  auto wide = mixed_space();
  auto e = encode_config(wide, Configuration{{0.05, std::int64_t{3}, std::string("gelu")}});
  CHECK(e.size() == wide.encoded_width());

  try {
    encode_config(s, Configuration{{11.0}});
    CHECK(false);
  } catch (const Error& err) {
    CHECK(err.code() == Errc::invalid_configuration);
  }
}

TEST_CASE("decode_config inverts encode_config") {
  auto space = mixed_space();
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Configuration c{{rng.next_uniform(1e-4, 1e-1),
                     static_cast<std::int64_t>(1 + rng.next_below(6)),
                     std::vector<std::string>{"relu", "gelu", "tanh"}[rng.next_below(3)]}};
    auto enc = encode_config(space, c);
    Configuration back = decode_config(space, enc);
    CHECK(std::get<std::int64_t>(back.values[1]) == std::get<std::int64_t>(c.values[1]));
    CHECK(std::get<std::string>(back.values[2]) == std::get<std::string>(c.values[2]));
    CHECK(std::abs(std::get<double>(back.values[0]) - std::get<double>(c.values[0])) <=
          (1e-1 - 1e-4) * 1e-12);
  }
  CHECK_THROWS_AS(decode_config(space, std::vector<double>{0.1}), Error);
}

TEST_CASE("initial_design stratifies continuous dims") {
  auto space = one_continuous();
  auto design = initial_design(space, 4, 9);
  REQUIRE(design.size() == 4);
  std::set<int> strata;
  for (const auto& c : design) {
    double x = std::get<double>(c.values[0]);
    strata.insert(static_cast<int>(x * 4.0));
  }
  CHECK(strata.size() == 4);  // one sample per quarter
}

TEST_CASE("initial_design balances integer and categorical dims") {
  HyperparameterSpace s;
  s.dims = {{"n", IntegerDim{1, 3}}};
  auto design = initial_design(s, 9, 31);
  std::map<std::int64_t, int> counts;
  for (const auto& c : design) counts[std::get<std::int64_t>(c.values[0])]++;
  REQUIRE(counts.size() == 3);
  for (const auto& [v, n] : counts) {
    (void)v;
    CHECK(n == 3);
  }

  HyperparameterSpace cat;
  cat.dims = {{"mode", CategoricalDim{{"a", "b"}}}};
  auto cdesign = initial_design(cat, 6, 7);
  std::map<std::string, int> ccounts;
  for (const auto& c : cdesign) ccounts[std::get<std::string>(c.values[0])]++;
  CHECK(ccounts["a"] == 3);
  CHECK(ccounts["b"] == 3);
}

TEST_CASE("initial_design outputs validate and repeat deterministically") {
  auto space = mixed_space();
  auto a = initial_design(space, 17, 5);
  auto b = initial_design(space, 17, 5);
  REQUIRE(a.size() == 17);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(validate_configuration(space, a[i]).ok());
    CHECK(a[i] == b[i]);
  }
  auto c = initial_design(space, 17, 6);
  bool all_same = true;
  for (std::size_t i = 0; i < a.size(); ++i) all_same = all_same && (a[i] == c[i]);
  CHECK_FALSE(all_same);
  CHECK_THROWS_AS(initial_design(space, 0, 1), Error);
}

TEST_CASE("acquisition spec defaults and resolution") {
  AcquisitionSpec spec;
  CHECK(spec.mc_samples == 256);
  CHECK(spec.candidate_pool == 1024);
  CHECK(spec.resolved_initial_design(mixed_space()) == 6);
  CHECK(spec.resolved_initial_design(one_continuous()) == 5);
  spec.initial_design_size = 12;
  CHECK(spec.resolved_initial_design(one_continuous()) == 12);
  spec.mc_samples = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("surrogate interpolates noise-free training data") {
  auto space = one_continuous();
  auto data = sample_1d(smooth_fn, {0.05, 0.3, 0.5, 0.75, 0.95});
  auto model = SurrogateModel::fit(space, data, 42);
  for (const auto& [config, target] : data) {
    auto [mean, var] = model.posterior(config);
    CHECK(std::abs(mean - target) < 1e-6);
    CHECK(var >= 0.0);
    CHECK(var <= 1e-8);
  }
  CHECK(model.training_count() == 5);
  CHECK(std::isfinite(model.log_marginal_likelihood()));
  for (Eigen::Index d = 0; d < model.lengthscales().size(); ++d)
    CHECK(model.lengthscales()[d] > 0.0);
}

TEST_CASE("surrogate posterior reverts to the prior far from data") {
  auto space = one_continuous();
  auto data = sample_1d(smooth_fn, {0.1, 0.2, 0.3, 0.4, 0.5});
  auto model = SurrogateModel::fit(space, data, 7);
  double max_ls = model.lengthscales().maxCoeff();
  Eigen::VectorXd far(1);
  far[0] = 0.5 + 12.0 * max_ls;
  auto [mean, var] = model.posterior_encoded(far);
  CHECK(std::abs(mean - model.prior_mean()) <= 1e-3);
  CHECK(std::abs(var - model.prior_variance()) <= 1e-3 * model.prior_variance() + 1e-9);
}

TEST_CASE("posterior mean at a symmetry point is the target average") {
  auto space = one_continuous();
  std::vector<std::pair<Configuration, double>> data = {
      {Configuration{{0.3}}, 0.2}, {Configuration{{0.7}}, 0.6}};
  auto model = SurrogateModel::fit(space, data, 11);
  auto [mean, var] = model.posterior(Configuration{{0.5}});
  (void)var;
  // Standardized targets are +-1; the symmetric cross-covariances cancel, so
  // the de-standardized mean is exactly the raw average.
  CHECK(mean == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("two-point posterior matches hand-solved GP algebra") {
  auto space = one_continuous();
  std::vector<std::pair<Configuration, double>> data = {
      {Configuration{{0.25}}, 0.1}, {Configuration{{0.8}}, 0.5}};
  auto model = SurrogateModel::fit(space, data, 19);

  // Rebuild the standardized system with the fitted hyperparameters and
  // solve it by Gaussian elimination instead of Cholesky.
  const double std_dev = model.target_std();
  const double sig = model.signal_variance() / (std_dev * std_dev);
  const double noise = model.noise_variance() / (std_dev * std_dev);
  std::vector<double> ls(static_cast<std::size_t>(model.lengthscales().size()));
  for (std::size_t d = 0; d < ls.size(); ++d)
    ls[d] = model.lengthscales()[static_cast<Eigen::Index>(d)];

  std::vector<std::vector<double>> x = {{0.25}, {0.8}};
  std::vector<double> y_std = {(0.1 - model.prior_mean()) / std_dev,
                               (0.5 - model.prior_mean()) / std_dev};
  const double diag = sig + noise + model.jitter();
  const double off = matern_ref(x[0], x[1], ls, sig);

  for (double probe : {0.1, 0.4, 0.55, 0.9}) {
    std::vector<std::vector<long double>> k = {{diag, off}, {off, diag}};
    auto w = oracles::solve_dense(k, {y_std[0], y_std[1]});
    std::vector<double> kstar = {matern_ref({probe}, x[0], ls, sig),
                                 matern_ref({probe}, x[1], ls, sig)};
    double mean_ref = model.prior_mean() +
                      std_dev * (kstar[0] * w[0] + kstar[1] * w[1]);

    std::vector<std::vector<long double>> k2 = {{diag, off}, {off, diag}};
    auto v = oracles::solve_dense(k2, {kstar[0], kstar[1]});
    double var_ref = sig - (kstar[0] * v[0] + kstar[1] * v[1]);
    var_ref = std::max(var_ref, 0.0) * std_dev * std_dev;

    auto [mean, var] = model.posterior(Configuration{{probe}});
    CHECK(mean == doctest::Approx(mean_ref).epsilon(1e-8));
    CHECK(var == doctest::Approx(var_ref).epsilon(1e-6).scale(1e-12));
  }
}

TEST_CASE("conflicting duplicates force the noise variance up") {
  auto space = one_continuous();
  const double c = 0.2;
  std::vector<std::pair<Configuration, double>> data = {
      {Configuration{{0.4}}, 0.3 + c},
      {Configuration{{0.4}}, 0.3 - c},
      {Configuration{{0.9}}, 0.1}};
  auto model = SurrogateModel::fit(space, data, 23);
  // Population variance of the duplicated pair is c^2; a fit that explains
  // the conflict needs noise of at least half of that.
  CHECK(model.noise_variance() >= c * c / 2.0);
}

TEST_CASE("surrogate fit preconditions") {
  auto space = one_continuous();
  std::vector<std::pair<Configuration, double>> one = {{Configuration{{0.5}}, 1.0}};
  try {
    SurrogateModel::fit(space, one, 1);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_feasible_trials);
  }

  std::vector<std::pair<Configuration, double>> same = {
      {Configuration{{0.5}}, 1.0}, {Configuration{{0.5}}, 2.0}};
  CHECK_THROWS_AS(SurrogateModel::fit(space, same, 1), Error);
}

TEST_CASE("fit_surrogate uses only feasible trials") {
  auto space = one_continuous();
  std::vector<std::pair<Configuration, AggregateResult>> trials;
  AggregateResult ok{0.2, 0.0, 0.1, true, 0.2};
  AggregateResult bad{0.9, 0.5, 0.1, false, std::nullopt};
  trials.push_back({Configuration{{0.1}}, ok});
  AggregateResult ok2 = ok;
  ok2.weighted_mean = 0.4;
  ok2.aggregate = 0.4;
  trials.push_back({Configuration{{0.6}}, ok2});
  trials.push_back({Configuration{{0.9}}, bad});
  auto model = fit_surrogate(trials, space, 3);
  CHECK(model.training_count() == 2);

  std::vector<std::pair<Configuration, AggregateResult>> starved = {
      {Configuration{{0.1}}, ok}, {Configuration{{0.9}}, bad}};
  try {
    fit_surrogate(starved, space, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_feasible_trials);
  }
}

TEST_CASE("more multi-start budget never hurts the marginal likelihood") {
  auto space = one_continuous();
  auto data = sample_1d(smooth_fn, {0.1, 0.25, 0.4, 0.6, 0.8, 0.95});
  auto narrow = SurrogateModel::fit(space, data, 5, 1);
  auto wide = SurrogateModel::fit(space, data, 5, 16);
  CHECK(wide.log_marginal_likelihood() >= narrow.log_marginal_likelihood() - 1e-9);
}

TEST_CASE("posterior variance is nonnegative over a random probe") {
  auto space = mixed_space();
  Rng rng(47);
  std::vector<std::pair<Configuration, double>> data;
  for (int i = 0; i < 12; ++i) {
    Configuration c{{rng.next_uniform(1e-4, 1e-1),
                     static_cast<std::int64_t>(1 + rng.next_below(6)),
                     std::vector<std::string>{"relu", "gelu", "tanh"}[rng.next_below(3)]}};
    data.push_back({c, 0.1 * rng.next_normal()});
  }
  auto model = SurrogateModel::fit(space, data, 13);
  for (int i = 0; i < 1000; ++i) {
    Configuration c{{rng.next_uniform(1e-4, 1e-1),
                     static_cast<std::int64_t>(1 + rng.next_below(6)),
                     std::vector<std::string>{"relu", "gelu", "tanh"}[rng.next_below(3)]}};
    auto [mean, var] = model.posterior(c);
    CHECK(std::isfinite(mean));
    CHECK(var >= 0.0);
  }
}

TEST_CASE("feasibility model stays inside the open unit interval") {
  auto space = one_continuous();
  std::vector<std::pair<Configuration, bool>> all_true;
  for (int i = 0; i < 8; ++i)
    all_true.push_back({Configuration{{0.1 * (i + 1)}}, true});
  FeasibilityModel fm(space, all_true);
  for (double x : {0.05, 0.3, 0.77, 0.99}) {
    double p = fm.probability(Configuration{{x}});
    CHECK(p > 0.5);
    CHECK(p < 1.0);
  }

  FeasibilityModel empty;
  CHECK(empty.probability_encoded(Eigen::VectorXd::Zero(1)) == doctest::Approx(0.5));

  std::vector<std::pair<Configuration, bool>> split;
  for (int i = 0; i < 5; ++i) split.push_back({Configuration{{0.05 + 0.02 * i}}, true});
  for (int i = 0; i < 5; ++i) split.push_back({Configuration{{0.85 + 0.02 * i}}, false});
  FeasibilityModel mixed(space, split);
  CHECK(mixed.probability(Configuration{{0.1}}) >
        mixed.probability(Configuration{{0.9}}));
  double lo = mixed.probability(Configuration{{0.9}});
  CHECK(lo > 0.0);
  CHECK(lo < 1.0);
}

TEST_CASE("monte carlo EI matches the closed form") {
  Rng rng(2024);
  int tested = 0;
  while (tested < 100) {
    double mean = rng.next_uniform(-1.0, 1.0);
    double sd = rng.next_uniform(0.05, 2.0);
    double best = rng.next_uniform(-1.0, 1.0);
    double exact = oracles::expected_improvement_closed_form(mean, sd, best);
    // Keep triples with non-negligible improvement mass; relative error in
    // the far tail measures the tail itself, not the estimator.
    if (exact < 0.01 * sd) continue;
    double mc = monte_carlo_ei(mean, sd * sd, best, 4096,
                               derive_seed(99, "triple", tested));
    CHECK(std::abs(mc - exact) / exact < 0.05);
    ++tested;
  }
}

TEST_CASE("monte carlo EI handles degenerate variance exactly") {
  CHECK(monte_carlo_ei(0.7, 0.0, 0.5, 64, 1) == doctest::Approx(0.2));
  CHECK(monte_carlo_ei(0.3, 0.0, 0.5, 64, 1) == 0.0);
  CHECK_THROWS_AS(monte_carlo_ei(0.0, 1.0, 0.0, 0, 1), Error);
}

TEST_CASE("acquire is deterministic and emits valid configurations") {
  auto space = mixed_space();
  Rng rng(8);
  std::vector<std::pair<Configuration, double>> data;
  std::vector<std::pair<Configuration, bool>> labels;
  for (int i = 0; i < 10; ++i) {
    Configuration c{{rng.next_uniform(1e-4, 1e-1),
                     static_cast<std::int64_t>(1 + rng.next_below(6)),
                     std::vector<std::string>{"relu", "gelu", "tanh"}[rng.next_below(3)]}};
    data.push_back({c, rng.next_uniform(-0.1, 0.3)});
    labels.push_back({c, true});
  }
  auto model = SurrogateModel::fit(space, data, 21);
  FeasibilityModel fm(space, labels);
  AcquisitionSpec spec;
  spec.candidate_pool = 256;
  spec.mc_samples = 128;

  auto a = acquire(model, fm, space, 0.25, spec, 77);
  auto b = acquire(model, fm, space, 0.25, spec, 77);
  CHECK(a == b);
  CHECK(validate_configuration(space, a).ok());

  // A constant feasibility factor cannot change the argmax: unanimous labels
  // and the no-evidence prior must pick the same candidate.
  FeasibilityModel no_evidence;
  auto c = acquire(model, no_evidence, space, 0.25, spec, 77);
  CHECK(a == c);
}

TEST_CASE("acquire avoids dominated zero-variance points") {
  auto space = one_continuous();
  auto data = sample_1d(smooth_fn, {0.1, 0.3, 0.5, 0.7, 0.9});
  auto model = SurrogateModel::fit(space, data, 31);
  std::vector<std::pair<Configuration, bool>> labels;
  for (const auto& [c, y] : data) {
    (void)y;
    labels.push_back({c, true});
  }
  FeasibilityModel fm(space, labels);
  AcquisitionSpec spec;
  spec.candidate_pool = 512;
  spec.mc_samples = 256;

  double incumbent = -std::numeric_limits<double>::infinity();
  for (const auto& [c, y] : data) {
    (void)c;
    incumbent = std::max(incumbent, y);
  }
  auto chosen = acquire(model, fm, space, incumbent, spec, 5);
  auto [mu, var] = model.posterior(chosen);
  // The winner cannot be a dominated point the model is certain about.
  bool dominated_certain = var < 1e-12 && mu < incumbent - 1e-9;
  CHECK_FALSE(dominated_certain);
}
