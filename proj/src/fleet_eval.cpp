#include "fleetopt/fleet_eval.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "fleetopt/bayesopt.hpp"
#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

void check_range(const std::pair<double, double>& r, const char* what) {
  if (!std::isfinite(r.first) || !std::isfinite(r.second) || r.first > r.second) {
    raise(Errc::invalid_spec, std::string(what) + " range is not a finite lo <= hi pair");
  }
}

// Half-up rounding keeps the regressor count stable and reproducible; fleet
// sizes are small enough that banker's rounding surprises would be visible.
int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

void SyntheticFleetSpec::validate() const {
  if (model_count < 1) raise(Errc::invalid_spec, "model_count must be >= 1");
  if (attribute_clusters < 0) {
    raise(Errc::invalid_spec, "attribute_clusters must be >= 0");
  }
  if (techniques.empty()) raise(Errc::invalid_spec, "at least one technique spec required");
  for (const auto& [id, t] : techniques) {
    if (id.empty()) raise(Errc::invalid_spec, "technique id must be non-empty");
    for (double c : t.global_center) {
      if (!std::isfinite(c)) raise(Errc::invalid_spec, "global_center has non-finite entry");
    }
    if (!std::isfinite(t.center_spread) || t.center_spread < 0.0) {
      raise(Errc::invalid_spec, "center_spread must be finite and >= 0");
    }
    check_range(t.peak_delta_range, "peak_delta");
    check_range(t.curvature_range, "curvature");
    if (t.curvature_range.first < 0.0) {
      raise(Errc::invalid_spec, "curvature must be >= 0");
    }
    if (!(t.regressor_fraction >= 0.0 && t.regressor_fraction <= 1.0)) {
      raise(Errc::invalid_spec, "regressor_fraction must be in [0, 1]");
    }
    if (!std::isfinite(t.noise_std) || t.noise_std < 0.0) {
      raise(Errc::invalid_spec, "noise_std must be finite and >= 0");
    }
  }
}

double QuadraticResponse::value(const std::vector<double>& scaled) const {
  if (scaled.size() != curvature.size() || scaled.size() != center.size()) {
    raise(Errc::length_mismatch, "response dimension does not match configuration");
  }
  double v = peak_delta;
  for (std::size_t k = 0; k < scaled.size(); ++k) {
    const double d = scaled[k] - center[k];
    v -= curvature[k] * d * d;
  }
  return v;
}

std::vector<double> QuadraticResponse::box_argmax() const {
  std::vector<double> p(center.size());
  for (std::size_t k = 0; k < center.size(); ++k) {
    p[k] = std::clamp(center[k], 0.0, 1.0);
  }
  return p;
}

double QuadraticResponse::box_max() const { return value(box_argmax()); }

SyntheticEvaluator::SyntheticEvaluator(
    Fleet fleet, std::map<std::string, Technique> techniques,
    std::map<std::string, std::map<std::string, QuadraticResponse>> responses,
    std::map<std::string, double> noise_std, std::uint64_t seed)
    : fleet_(std::move(fleet)),
      techniques_(std::move(techniques)),
      responses_(std::move(responses)),
      noise_std_(std::move(noise_std)),
      seed_(seed) {
  for (const auto& [tech_id, per_model] : responses_) {
    const auto it = techniques_.find(tech_id);
    if (it == techniques_.end()) {
      raise(Errc::unknown_technique, "responses reference unknown technique " + tech_id);
    }
    const std::size_t width = it->second.space.encoded_width();
    for (const auto& [model_id, resp] : per_model) {
      if (!fleet_.contains(model_id)) {
        raise(Errc::unknown_model, "responses reference unknown model " + model_id);
      }
      if (resp.curvature.size() != width || resp.center.size() != width) {
        raise(Errc::invalid_spec,
              "response for " + model_id + "/" + tech_id + " has wrong width");
      }
    }
  }
}

double SyntheticEvaluator::noise_std(const std::string& technique_id) const {
  const auto it = noise_std_.find(technique_id);
  return it == noise_std_.end() ? 0.0 : it->second;
}

const QuadraticResponse& SyntheticEvaluator::response(
    const std::string& technique_id, const std::string& model_id) const {
  const auto t = responses_.find(technique_id);
  if (t == responses_.end()) {
    raise(Errc::unknown_technique, "no responses for technique " + technique_id);
  }
  const auto m = t->second.find(model_id);
  if (m == t->second.end()) {
    raise(Errc::unknown_model, "no response for model " + model_id);
  }
  return m->second;
}

double SyntheticEvaluator::noise_free_delta(const std::string& model_id,
                                            const std::string& technique_id,
                                            const Configuration& config) const {
  const auto t = techniques_.find(technique_id);
  if (t == techniques_.end()) {
    raise(Errc::unknown_technique, "unknown technique " + technique_id);
  }
  const std::vector<double> scaled = encode_config(t->second.space, config);
  return response(technique_id, model_id).value(scaled);
}

double SyntheticEvaluator::evaluate(const std::string& model_id,
                                    const std::string& technique_id,
                                    const Configuration& config,
                                    int repeat_index) {
  const ModelDescriptor& model = fleet_.by_id(model_id);
  double delta = noise_free_delta(model_id, technique_id, config);
  const double sd = noise_std(technique_id);
  if (sd > 0.0) {
    // Counter-based: the draw is a pure function of (model, technique,
    // configuration, repeat), so identical queries see identical noise.
    Rng rng(derive_seed(seed_, "noise", model_id, technique_id,
                        config_key(config), repeat_index));
    delta += sd * rng.next_normal();
  }
  return model.baseline_performance + delta;
}

std::pair<Fleet, std::shared_ptr<SyntheticEvaluator>> generate_synthetic_fleet(
    const SyntheticFleetSpec& spec,
    const std::map<std::string, Technique>& techniques) {
  spec.validate();
  const int m = spec.model_count;
  int clusters = spec.attribute_clusters > 0 ? spec.attribute_clusters : (m + 4) / 5;
  clusters = std::clamp(clusters, 1, m);

  std::vector<ModelDescriptor> models;
  models.reserve(static_cast<std::size_t>(m));
  char buf[64];
  for (int i = 0; i < m; ++i) {
    std::snprintf(buf, sizeof(buf), "model_%03d", i);
    // Balanced contiguous groups; members of a group share every clustering
    // attribute, so they embed as near-duplicates.
    const int blob = static_cast<int>(static_cast<long long>(i) * clusters / m);
    ModelDescriptor d;
    d.id = buf;
    d.ranking_stage = RankingStage::ranking;
    d.hardware = Hardware::gpu;
    std::snprintf(buf, sizeof(buf), "event_%02d", blob);
    d.optimization_event = buf;
    std::snprintf(buf, sizeof(buf), "surface_%02d", blob);
    d.product_surface = buf;
    d.data_constraint = DataConstraint::full;
    d.flops = 1e9;
    Rng base_rng(derive_seed(spec.seed, "baseline", d.id));
    d.baseline_performance = base_rng.next_uniform(0.4, 0.6);
    d.weight = 1.0;
    models.push_back(std::move(d));
  }
  Fleet fleet(std::move(models));
  auto evaluator = synthetic_responses(fleet, spec, techniques);
  return {std::move(fleet), std::move(evaluator)};
}

std::shared_ptr<SyntheticEvaluator> synthetic_responses(
    const Fleet& fleet, const SyntheticFleetSpec& spec,
    const std::map<std::string, Technique>& techniques) {
  if (fleet.models().empty()) {
    raise(Errc::empty_fleet, "synthetic responses need at least one model");
  }
  {
    SyntheticFleetSpec checked = spec;
    checked.model_count = static_cast<int>(fleet.size());
    checked.validate();
  }
  for (const auto& [tech_id, tspec] : spec.techniques) {
    const auto it = techniques.find(tech_id);
    if (it == techniques.end()) {
      raise(Errc::invalid_spec, "spec references unknown technique " + tech_id);
    }
    if (tspec.global_center.size() != it->second.space.encoded_width()) {
      raise(Errc::invalid_spec,
            "global_center width does not match space of " + tech_id);
    }
  }
  const int m = static_cast<int>(fleet.size());

  std::vector<std::string> sorted_ids;
  sorted_ids.reserve(fleet.size());
  for (const auto& md : fleet.models()) sorted_ids.push_back(md.id);
  std::sort(sorted_ids.begin(), sorted_ids.end());

  std::map<std::string, std::map<std::string, QuadraticResponse>> responses;
  std::map<std::string, double> noise;
  std::map<std::string, Technique> used;
  for (const auto& [tech_id, tspec] : spec.techniques) {
    used.emplace(tech_id, techniques.at(tech_id));
    noise[tech_id] = tspec.noise_std;

    const int n_regress = round_half_up(tspec.regressor_fraction * m);
    std::vector<std::string> order = sorted_ids;
    Rng pick(derive_seed(spec.seed, "regressors", tech_id));
    pick.shuffle(order);
    std::vector<bool> is_regressor(fleet.size(), false);
    for (int r = 0; r < n_regress; ++r) {
      is_regressor[fleet.index_of(order[static_cast<std::size_t>(r)])] = true;
    }

    const std::size_t width = tspec.global_center.size();
    auto& per_model = responses[tech_id];
    for (const auto& id : sorted_ids) {
      Rng rng(derive_seed(spec.seed, "response", tech_id, id));
      QuadraticResponse resp;
      resp.peak_delta = rng.next_uniform(tspec.peak_delta_range.first,
                                         tspec.peak_delta_range.second);
      if (is_regressor[fleet.index_of(id)]) resp.peak_delta = -resp.peak_delta;
      resp.curvature.resize(width);
      resp.center.resize(width);
      for (std::size_t k = 0; k < width; ++k) {
        resp.curvature[k] = rng.next_uniform(tspec.curvature_range.first,
                                             tspec.curvature_range.second);
      }
      for (std::size_t k = 0; k < width; ++k) {
        resp.center[k] = tspec.global_center[k] +
                         rng.next_uniform(-tspec.center_spread, tspec.center_spread);
      }
      per_model.emplace(id, std::move(resp));
    }
  }

  return std::make_shared<SyntheticEvaluator>(
      fleet, std::move(used), std::move(responses), std::move(noise), spec.seed);
}

// ---------------------------------------------------------------------------
// Command backend

struct CommandEvaluator::Pool {
  std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;
  int cap = 1;
};

namespace {

// A write to a child that exited would otherwise kill the process.
void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction sa{};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
    return true;
  }();
  (void)done;
}

struct RunResult {
  bool timed_out = false;
  int exit_status = -1;
  bool exited_normally = false;
  std::string out;
};

RunResult run_subprocess(const std::vector<std::string>& argv,
                         const std::string& input, double timeout_s) {
  ignore_sigpipe_once();
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
    raise(Errc::external_command_failed, "pipe() failed");
  }
  const pid_t pid = fork();
  if (pid < 0) raise(Errc::external_command_failed, "fork() failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    execvp(cargv[0], cargv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);

  // Requests are far below the pipe buffer, so a single write cannot block
  // indefinitely even if the child never reads.
  ssize_t unused = write(in_pipe[1], input.data(), input.size());
  (void)unused;
  close(in_pipe[1]);

  RunResult res;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_s);
  char buf[4096];
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      res.timed_out = true;
      break;
    }
    const int wait_ms = static_cast<int>(std::min<long long>(
        1000,
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1));
    struct pollfd pfd{out_pipe[0], POLLIN, 0};
    const int pr = poll(&pfd, 1, wait_ms);
    if (pr < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (pr == 0) continue;
    const ssize_t n = read(out_pipe[0], buf, sizeof(buf));
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (n == 0) break;  // EOF: child closed stdout
    res.out.append(buf, static_cast<std::size_t>(n));
  }
  close(out_pipe[0]);

  if (res.timed_out) {
    kill(pid, SIGKILL);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  res.exited_normally = WIFEXITED(status);
  res.exit_status = res.exited_normally ? WEXITSTATUS(status) : -1;
  return res;
}

}  // namespace

CommandEvaluator::CommandEvaluator(Fleet fleet,
                                   std::map<std::string, Technique> techniques,
                                   std::vector<std::string> argv,
                                   double timeout_s, std::uint64_t seed,
                                   int max_in_flight)
    : fleet_(std::move(fleet)),
      techniques_(std::move(techniques)),
      argv_(std::move(argv)),
      timeout_s_(timeout_s),
      seed_(seed),
      pool_(std::make_unique<Pool>()) {
  if (argv_.empty()) raise(Errc::invalid_spec, "command argv must be non-empty");
  if (!(timeout_s_ > 0.0)) raise(Errc::invalid_spec, "timeout must be > 0");
  if (max_in_flight < 0) raise(Errc::invalid_spec, "max_in_flight must be >= 0");
  pool_->cap = max_in_flight > 0
                   ? max_in_flight
                   : std::max(1u, std::thread::hardware_concurrency());
}

CommandEvaluator::~CommandEvaluator() = default;

double CommandEvaluator::evaluate(const std::string& model_id,
                                  const std::string& technique_id,
                                  const Configuration& config,
                                  int repeat_index) {
  if (!fleet_.contains(model_id)) {
    raise(Errc::unknown_model, "unknown model " + model_id);
  }
  const auto t = techniques_.find(technique_id);
  if (t == techniques_.end()) {
    raise(Errc::unknown_technique, "unknown technique " + technique_id);
  }
  const HyperparameterSpace& space = t->second.space;
  const ValidationReport report = validate_configuration(space, config);
  if (!report.ok()) {
    raise(Errc::invalid_configuration, report.issues.front().message);
  }

  nlohmann::json cfg = nlohmann::json::object();
  for (std::size_t i = 0; i < space.dims.size(); ++i) {
    const auto& name = space.dims[i].name;
    std::visit([&](const auto& v) { cfg[name] = v; }, config.values[i]);
  }
  nlohmann::json req{{"model_id", model_id},
                     {"technique_id", technique_id},
                     {"config", cfg},
                     {"repeat", repeat_index},
                     {"seed", derive_seed(seed_, model_id, technique_id,
                                          config_key(config), repeat_index)}};
  const std::string input = req.dump() + "\n";

  {
    std::unique_lock<std::mutex> lock(pool_->mu);
    pool_->cv.wait(lock, [&] { return pool_->in_flight < pool_->cap; });
    ++pool_->in_flight;
  }
  RunResult res;
  try {
    res = run_subprocess(argv_, input, timeout_s_);
  } catch (...) {
    std::lock_guard<std::mutex> lock(pool_->mu);
    --pool_->in_flight;
    pool_->cv.notify_one();
    throw;
  }
  {
    std::lock_guard<std::mutex> lock(pool_->mu);
    --pool_->in_flight;
    pool_->cv.notify_one();
  }

  if (res.timed_out) {
    raise(Errc::external_command_failed,
          "evaluator timed out after " + std::to_string(timeout_s_) + "s");
  }
  if (!res.exited_normally || res.exit_status != 0) {
    raise(Errc::external_command_failed,
          "evaluator exited with status " + std::to_string(res.exit_status));
  }

  std::string line = res.out;
  const auto first_content = line.find_first_not_of(" \t\r\n");
  if (first_content == std::string::npos) {
    raise(Errc::external_command_failed, "evaluator produced no output");
  }
  line = line.substr(first_content);
  if (const auto nl = line.find('\n'); nl != std::string::npos) {
    line = line.substr(0, nl);
  }

  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    raise(Errc::external_command_failed, "evaluator output is not valid JSON");
  }
  if (resp.is_object() && resp.contains("error")) {
    raise(Errc::external_command_failed,
          "evaluator reported: " + resp["error"].dump());
  }
  if (!resp.is_object() || !resp.contains("performance") ||
      !resp["performance"].is_number()) {
    raise(Errc::external_command_failed,
          "evaluator response lacks a numeric performance field");
  }
  const double p = resp["performance"].get<double>();
  if (!std::isfinite(p)) {
    raise(Errc::external_command_failed, "evaluator returned non-finite performance");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Grid oracle

GridOracleResult grid_oracle(const SyntheticEvaluator& evaluator,
                             const Technique& technique, const Fleet& fleet,
                             const Thresholds& thresholds, int resolution,
                             bool include_table) {
  thresholds.validate();
  const auto& dims = technique.space.dims;
  if (dims.empty()) raise(Errc::invalid_spec, "grid oracle needs at least one dim");

  // Per-dim sample positions in raw units along with their scaled images.
  std::vector<std::vector<ConfigValue>> levels(dims.size());
  std::vector<std::vector<double>> scaled_levels(dims.size());
  double total = 1.0;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    if (std::holds_alternative<ContinuousDim>(dims[d].kind)) {
      if (resolution < 2) {
        raise(Errc::invalid_argument, "grid resolution must be >= 2");
      }
      const auto& c = std::get<ContinuousDim>(dims[d].kind);
      for (int t = 0; t < resolution; ++t) {
        const double u = static_cast<double>(t) / (resolution - 1);
        levels[d].push_back(c.lo + u * (c.hi - c.lo));
        scaled_levels[d].push_back(u);
      }
    } else if (std::holds_alternative<IntegerDim>(dims[d].kind)) {
      const auto& it = std::get<IntegerDim>(dims[d].kind);
      for (std::int64_t v = it.lo; v <= it.hi; ++v) {
        levels[d].push_back(v);
        scaled_levels[d].push_back(
            it.hi == it.lo ? 0.0
                           : static_cast<double>(v - it.lo) /
                                 static_cast<double>(it.hi - it.lo));
      }
    } else {
      raise(Errc::invalid_spec, "grid oracle supports continuous and integer dims only");
    }
    total *= static_cast<double>(levels[d].size());
    if (total > 1e7) {
      raise(Errc::grid_too_large, "grid would exceed 10^7 points");
    }
  }

  const std::size_t n_models = fleet.size();
  std::vector<const QuadraticResponse*> resp(n_models);
  for (std::size_t i = 0; i < n_models; ++i) {
    resp[i] = &evaluator.response(technique.id, fleet.models()[i].id);
  }
  const std::vector<double>& weights = fleet.normalized_weights();

  GridOracleResult out;
  double best_feasible = -std::numeric_limits<double>::infinity();
  double best_any_mean = -std::numeric_limits<double>::infinity();
  Configuration best_any;

  std::vector<std::size_t> idx(dims.size(), 0);
  std::vector<double> scaled(dims.size());
  std::vector<double> deltas(n_models);
  for (;;) {
    Configuration config;
    config.values.reserve(dims.size());
    for (std::size_t d = 0; d < dims.size(); ++d) {
      config.values.push_back(levels[d][idx[d]]);
      scaled[d] = scaled_levels[d][idx[d]];
    }
    for (std::size_t i = 0; i < n_models; ++i) {
      deltas[i] = resp[i]->value(scaled);
    }
    const AggregateResult agg = aggregate_delta(deltas, weights, thresholds);
    if (include_table) out.table.emplace_back(scaled, agg);

    if (agg.feasible && *agg.aggregate > best_feasible) {
      best_feasible = *agg.aggregate;
      out.best_config = config;
      out.best = agg;
      out.found_feasible = true;
    }
    if (agg.weighted_mean > best_any_mean) {
      best_any_mean = agg.weighted_mean;
      best_any = config;
      if (!out.found_feasible) out.best = agg;
    }

    // Mixed-radix increment, last dim fastest.
    std::size_t d = dims.size();
    for (;;) {
      if (d == 0) break;
      --d;
      if (++idx[d] < levels[d].size()) break;
      idx[d] = 0;
      if (d == 0) {
        d = dims.size();
        break;
      }
    }
    if (d == dims.size()) break;
  }

  if (!out.found_feasible) {
    // No feasible point is a reportable outcome, not an error: callers see
    // found_feasible == false plus the unconstrained argmax for diagnosis.
    out.best_config = best_any;
  }
  return out;
}

}  // namespace fleetopt
