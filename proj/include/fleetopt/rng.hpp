#pragma once

// Deterministic random utilities. Everything here is fixed-width integer
// arithmetic with explicitly chosen constants, so streams are reproducible
// across platforms and standard-library versions. std::uniform_*_distribution
// is never used: its output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fleetopt {

// One squaring pass of the splitmix64 output function.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {
constexpr std::uint64_t mix_one(std::uint64_t acc, std::uint64_t v) {
  return splitmix64(acc ^ (v + 0x9e3779b97f4a7c15ULL + (acc << 6) + (acc >> 2)));
}
inline std::uint64_t as_key(std::uint64_t v) { return v; }
inline std::uint64_t as_key(std::int64_t v) { return static_cast<std::uint64_t>(v); }
inline std::uint64_t as_key(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }
inline std::uint64_t as_key(unsigned v) { return v; }
inline std::uint64_t as_key(std::string_view s) { return fnv1a64(s); }
inline std::uint64_t as_key(const char* s) { return fnv1a64(s); }
}  // namespace detail

// Key derivation: fold any number of tags into a root seed. Used to give
// every (purpose, index, ...) site its own independent stream while keeping
// the whole run a pure function of the top-level seed.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t root, Tags&&... tags) {
  std::uint64_t acc = splitmix64(root);
  ((acc = detail::mix_one(acc, detail::as_key(tags))), ...);
  return acc;
}

// Inverse standard normal CDF, Acklam's rational approximation
// (relative error below 1.2e-9 across (0,1)).
inline double inverse_normal_cdf(double p) {
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p <= 0.0) p = 1e-300;
  if (p >= 1.0) p = 1.0 - 1e-16;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  double q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_u01_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Lemire multiply-shift; the bias for any n
  // representable here is below 2^-64 per draw.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller, one deviate per call (two u64 draws).
  double next_normal() {
    double u1 = next_u01_open();
    double u2 = next_u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_u01(); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn from [0, n) without replacement, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k && i < n; ++i) {
      std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      using std::swap;
      swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::uint64_t state_;
};

}  // namespace fleetopt
