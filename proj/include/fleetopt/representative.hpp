#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fleetopt/types.hpp"

namespace fleetopt {

struct EncodedModelPoint {
  std::string model_id;
  std::vector<double> coordinates;
};

struct KMeansResult {
  std::vector<int> assignment;                 // per point, cluster index in [0, k)
  std::vector<std::vector<double>> centroids;  // k rows
  double sse = 0.0;
  std::vector<double> sse_trace;  // per Lloyd iteration of the winning restart
};

struct RepresentativeSet {
  std::vector<std::string> chosen_ids;  // ordered by cluster index
  int k = 0;
  std::map<std::string, int> cluster_assignment;
  std::vector<std::pair<int, double>> inertia_curve;  // (k, SSE) over the scanned range
};

struct HoldoutSet {
  std::vector<std::string> holdout_ids;
};

// Fleet attributes -> numeric coordinates: the five categorical attributes
// one-hot over observed values (lexicographic column order), flops log10 then
// z-scored across the fleet (population std; zero variance maps to zeros).
std::vector<EncodedModelPoint> encode_model_space(const Fleet& fleet);

// Lloyd's algorithm, best of `restarts` k-means++ initializations.
// Deterministic given seed; clusters are never left empty.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                    std::uint64_t seed, int restarts = 10);

// Scans SSE(k) over [k_min-1, k_max+1] and picks the k maximizing the
// discrete second difference SSE(k-1) - 2*SSE(k) + SSE(k+1); ties go to the
// smaller k. Returns the chosen k and the scanned curve.
std::pair<int, std::vector<std::pair<int, double>>> select_k_elbow(
    const std::vector<std::vector<double>>& points, int k_min, int k_max,
    std::uint64_t seed, int restarts = 10);

// Full pipeline: encode, pick k by elbow (k_range clamped to the fleet
// size), cluster, then take each cluster's member nearest its centroid
// (ties by lexicographic model id). A degenerate range (k_min == k_max)
// pins that k and skips the scan.
RepresentativeSet select_representatives(const Fleet& fleet,
                                         std::pair<int, int> k_range,
                                         std::uint64_t seed);

// Seeded uniform sample (without replacement) of ceil(fraction * |fleet
// minus representatives|) model ids from the non-representative complement.
HoldoutSet split_holdout(const Fleet& fleet, const RepresentativeSet& reps,
                         double fraction, std::uint64_t seed);

}  // namespace fleetopt
