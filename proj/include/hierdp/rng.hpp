#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "hierdp/errors.hpp"

namespace hierdp {

// All randomness flows through explicitly seeded streams.  A stream seed is
// derived by hashing (base seed, node id, label, index), so every draw is
// addressable: two runs with the same seed produce identical draws no matter
// how the surrounding loops are ordered or parallelized.

// splitmix64 finalizer (Stafford variant 13); bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ (mix64(v + 0x9e3779b97f4a7c15ULL) + (h << 6) + (h >> 2)));
}

// FNV-1a over the bytes of a label.
constexpr std::uint64_t hash_label(std::string_view s) noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a,
                                      std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
  std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
  h = hash_combine(h, a);
  h = hash_combine(h, b);
  h = hash_combine(h, c);
  return h;
}

// splitmix64 sequence generator.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform on the open interval (0, 1); never returns an endpoint.
  double next_unit() noexcept { return ((next_u64() >> 11) + 0.5) * 0x1p-53; }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) noexcept { return next_u64() % n; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Inverse CDF of the Laplace(scale) distribution; the median u = 1/2 maps to
// exactly zero.
inline double laplace_icdf(double scale, double u) {
  if (!(scale > 0.0)) throw InputError("laplace scale must be positive");
  double t = u - 0.5;
  return t >= 0.0 ? -scale * std::log1p(-2.0 * t) : scale * std::log1p(2.0 * t);
}

inline double sample_laplace(double scale, StreamRng& rng) {
  return laplace_icdf(scale, rng.next_unit());
}

// One-sided geometric on {0,1,2,...} with P[k] = (1-beta) beta^k.
inline long long sample_one_sided_geometric(double beta, StreamRng& rng) {
  if (!(beta > 0.0 && beta < 1.0)) throw InputError("geometric beta must lie in (0,1)");
  return static_cast<long long>(std::floor(std::log(rng.next_unit()) / std::log(beta)));
}

// Two-sided geometric with P[k] proportional to beta^|k|, realized as the
// difference of two independent one-sided draws.  Var = 2 beta / (1-beta)^2.
inline long long sample_two_sided_geometric(double beta, StreamRng& rng) {
  long long a = sample_one_sided_geometric(beta, rng);
  long long b = sample_one_sided_geometric(beta, rng);
  return a - b;
}

// Box-Muller; deterministic for a given stream, unlike std::normal_distribution.
inline double sample_gaussian(double sigma, StreamRng& rng) {
  if (sigma < 0.0) throw InputError("gaussian sigma must be non-negative");
  double u1 = rng.next_unit();
  double u2 = rng.next_unit();
  return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace hierdp
