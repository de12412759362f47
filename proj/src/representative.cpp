#include "fleetopt/representative.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fleetopt/rng.hpp"

namespace fleetopt {

namespace {

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// One-hot column order for a categorical attribute: observed values, sorted.
std::vector<std::string> observed_sorted(const Fleet& fleet,
                                         std::string (*get)(const ModelDescriptor&)) {
  std::set<std::string> seen;
  for (const auto& m : fleet.models()) seen.insert(get(m));
  return {seen.begin(), seen.end()};
}

void push_one_hot(std::vector<double>& coords, const std::vector<std::string>& levels,
                  const std::string& value) {
  for (const auto& level : levels) coords.push_back(level == value ? 1.0 : 0.0);
}

struct LloydOutcome {
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  double sse = 0.0;
  std::vector<double> trace;
};

std::vector<std::vector<double>> kmeanspp_init(
    const std::vector<std::vector<double>>& points, int k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(k));
  centers.push_back(points[rng.next_below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = sqdist(points[i], centers[0]);
      for (std::size_t c = 1; c < centers.size(); ++c)
        best = std::min(best, sqdist(points[i], centers[c]));
      d2[i] = best;
      total += best;
    }
    std::size_t pick;
    if (total <= 0.0) {
      // All points coincide with existing centers; any choice is equivalent.
      pick = rng.next_below(n);
    } else {
      double u = rng.next_u01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

LloydOutcome lloyd(const std::vector<std::vector<double>>& points, int k, Rng& rng,
                   int max_iters = 300) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  LloydOutcome out;
  out.centroids = kmeanspp_init(points, k, rng);
  out.assignment.assign(n, -1);

  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sqdist(points[i], out.centroids[0]);
      for (int c = 1; c < k; ++c) {
        double d = sqdist(points[i], out.centroids[c]);
        if (d < best_d) {  // ties keep the lowest cluster index
          best_d = d;
          best = c;
        }
      }
      if (out.assignment[i] != best) {
        out.assignment[i] = best;
        changed = true;
      }
    }

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[out.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[out.assignment[i]][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its previous centroid
      for (std::size_t d = 0; d < dim; ++d)
        out.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      sse += sqdist(points[i], out.centroids[out.assignment[i]]);
    out.trace.push_back(sse);
    out.sse = sse;
    if (!changed) break;
  }

  // Repair any cluster that converged empty: hand it the point currently
  // farthest from its own centroid (ties to the lowest index). This keeps
  // every cluster representable and never increases the SSE.
  for (int c = 0; c < k; ++c) {
    bool empty = std::none_of(out.assignment.begin(), out.assignment.end(),
                              [&](int a) { return a == c; });
    if (!empty) continue;
    std::size_t worst = 0;
    double worst_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      // Keep donor clusters non-empty: skip points that are alone.
      int owner = out.assignment[i];
      std::size_t owner_count = 0;
      for (int a : out.assignment)
        if (a == owner) ++owner_count;
      if (owner_count <= 1) continue;
      double d = sqdist(points[i], out.centroids[owner]);
      if (d > worst_d) {
        worst_d = d;
        worst = i;
      }
    }
    out.assignment[worst] = c;
    out.centroids[c] = points[worst];
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      sse += sqdist(points[i], out.centroids[out.assignment[i]]);
    out.trace.push_back(sse);
    out.sse = sse;
  }
  return out;
}

std::string get_ranking_stage(const ModelDescriptor& m) { return to_string(m.ranking_stage); }
std::string get_hardware(const ModelDescriptor& m) { return to_string(m.hardware); }
std::string get_event(const ModelDescriptor& m) { return m.optimization_event; }
std::string get_surface(const ModelDescriptor& m) { return m.product_surface; }
std::string get_constraint(const ModelDescriptor& m) { return to_string(m.data_constraint); }

}  // namespace

std::vector<EncodedModelPoint> encode_model_space(const Fleet& fleet) {
  if (fleet.size() < 2)
    raise(Errc::degenerate_fleet, "need at least 2 models to encode a model space");

  const auto stages = observed_sorted(fleet, get_ranking_stage);
  const auto hardware = observed_sorted(fleet, get_hardware);
  const auto events = observed_sorted(fleet, get_event);
  const auto surfaces = observed_sorted(fleet, get_surface);
  const auto constraints = observed_sorted(fleet, get_constraint);

  const std::size_t n = fleet.size();
  std::vector<double> log_flops(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    log_flops[i] = std::log10(fleet.models()[i].flops);
    mean += log_flops[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double lf : log_flops) var += (lf - mean) * (lf - mean);
  var /= static_cast<double>(n);
  const double std_dev = std::sqrt(var);

  std::vector<EncodedModelPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ModelDescriptor& m = fleet.models()[i];
    EncodedModelPoint p;
    p.model_id = m.id;
    push_one_hot(p.coordinates, stages, get_ranking_stage(m));
    push_one_hot(p.coordinates, hardware, get_hardware(m));
    push_one_hot(p.coordinates, events, get_event(m));
    push_one_hot(p.coordinates, surfaces, get_surface(m));
    push_one_hot(p.coordinates, constraints, get_constraint(m));
    p.coordinates.push_back(std_dev > 0.0 ? (log_flops[i] - mean) / std_dev : 0.0);
    out.push_back(std::move(p));
  }
  return out;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                    std::uint64_t seed, int restarts) {
  if (points.empty()) raise(Errc::invalid_k, "no points to cluster");
  if (k < 1 || static_cast<std::size_t>(k) > points.size())
    raise(Errc::invalid_k, "k = " + std::to_string(k) + " outside [1, " +
                               std::to_string(points.size()) + "]");
  if (restarts < 1) raise(Errc::invalid_argument, "restarts must be >= 1");
  for (const auto& p : points)
    if (p.size() != points[0].size())
      raise(Errc::length_mismatch, "points have mixed dimensionality");

  LloydOutcome best;
  bool have = false;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans-restart", r));
    LloydOutcome run = lloyd(points, k, rng);
    if (!have || run.sse < best.sse) {  // strict: ties keep the earliest restart
      best = std::move(run);
      have = true;
    }
  }

  KMeansResult result;
  result.assignment = std::move(best.assignment);
  result.centroids = std::move(best.centroids);
  result.sse = best.sse;
  result.sse_trace = std::move(best.trace);
  return result;
}

std::pair<int, std::vector<std::pair<int, double>>> select_k_elbow(
    const std::vector<std::vector<double>>& points, int k_min, int k_max,
    std::uint64_t seed, int restarts) {
  const int n = static_cast<int>(points.size());
  if (!(2 <= k_min && k_min < k_max && k_max <= n - 1))
    raise(Errc::range_too_narrow,
          "need 2 <= k_min < k_max <= n-1, got [" + std::to_string(k_min) + ", " +
              std::to_string(k_max) + "] with n = " + std::to_string(n));

  std::vector<std::pair<int, double>> curve;
  for (int k = k_min - 1; k <= k_max + 1; ++k)
    curve.emplace_back(k, kmeans(points, k, derive_seed(seed, "elbow-k", k), restarts).sse);

  auto sse_at = [&](int k) { return curve[static_cast<std::size_t>(k - (k_min - 1))].second; };
  int best_k = k_min;
  double best_curv = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    double curv = sse_at(k - 1) - 2.0 * sse_at(k) + sse_at(k + 1);
    if (curv > best_curv) {  // strict: ties stay with the smaller k
      best_curv = curv;
      best_k = k;
    }
  }
  return {best_k, curve};
}

RepresentativeSet select_representatives(const Fleet& fleet,
                                         std::pair<int, int> k_range,
                                         std::uint64_t seed) {
  auto encoded = encode_model_space(fleet);
  // Clustering runs on id-sorted points so the outcome does not depend on
  // the order models were listed in.
  std::sort(encoded.begin(), encoded.end(),
            [](const EncodedModelPoint& a, const EncodedModelPoint& b) {
              return a.model_id < b.model_id;
            });
  const int n = static_cast<int>(encoded.size());
  const int k_min = k_range.first;
  const int k_max = std::min(k_range.second, n - 1);

  std::vector<std::vector<double>> points;
  points.reserve(encoded.size());
  for (const auto& p : encoded) points.push_back(p.coordinates);

  // A degenerate range pins k outright; the elbow scan needs room to move.
  int k = k_range.first;
  std::vector<std::pair<int, double>> curve;
  if (k_range.first == k_range.second) {
    if (k < 1 || k > n)
      raise(Errc::invalid_k, "fixed k = " + std::to_string(k) +
                                 " outside [1, " + std::to_string(n) + "]");
  } else {
    std::tie(k, curve) =
        select_k_elbow(points, k_min, k_max, derive_seed(seed, "elbow"));
  }
  KMeansResult clustering = kmeans(points, k, derive_seed(seed, "final-k", k));

  RepresentativeSet reps;
  reps.k = k;
  reps.inertia_curve = std::move(curve);
  for (int i = 0; i < n; ++i)
    reps.cluster_assignment[encoded[static_cast<std::size_t>(i)].model_id] =
        clustering.assignment[static_cast<std::size_t>(i)];

  for (int c = 0; c < k; ++c) {
    int best = -1;
    double best_d = 0.0;
    for (int i = 0; i < n; ++i) {
      if (clustering.assignment[static_cast<std::size_t>(i)] != c) continue;
      double d = sqdist(points[static_cast<std::size_t>(i)], clustering.centroids[static_cast<std::size_t>(c)]);
      // Points arrive id-sorted, so strict < breaks ties lexicographically.
      if (best < 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    reps.chosen_ids.push_back(encoded[static_cast<std::size_t>(best)].model_id);
  }
  return reps;
}

HoldoutSet split_holdout(const Fleet& fleet, const RepresentativeSet& reps,
                         double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    raise(Errc::invalid_argument, "fraction must lie in (0, 1]");

  std::set<std::string> chosen(reps.chosen_ids.begin(), reps.chosen_ids.end());
  std::vector<std::string> complement;
  for (const auto& m : fleet.models())
    if (!chosen.count(m.id)) complement.push_back(m.id);
  if (complement.empty())
    raise(Errc::no_non_representatives, "representatives cover the entire fleet");
  std::sort(complement.begin(), complement.end());

  const std::size_t want = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(complement.size())));
  Rng rng(derive_seed(seed, "holdout"));
  auto picks = rng.sample_without_replacement(complement.size(), want);

  HoldoutSet out;
  for (std::size_t idx : picks) out.holdout_ids.push_back(complement[idx]);
  std::sort(out.holdout_ids.begin(), out.holdout_ids.end());
  return out;
}

}  // namespace fleetopt
