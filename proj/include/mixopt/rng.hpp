#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace mixopt {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based random stream keyed by (seed, stream_id).
///
/// Draw k of a stream is a pure function of (seed, stream_id, k), so streams
/// are reproducible across platforms and independent of one another. All
/// derived draws (uniform, normal, index, Dirichlet) are implemented here
/// rather than through <random> distributions, whose outputs are
/// implementation-defined.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed),
        stream_id_(stream_id),
        key_(detail::mix64(seed ^ detail::mix64(stream_id + detail::kGolden))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    return detail::mix64(key_ + (counter_++) * detail::kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n); n must be positive. Lemire's rejection method.
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() noexcept {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  /// Dirichlet(1, ..., 1) draw, i.e. uniform on the probability simplex.
  std::vector<double> dirichlet_ones(std::size_t n) {
    std::vector<double> out(n);
    double total = 0.0;
    for (auto& v : out) {
      v = -std::log(1.0 - uniform01());
      total += v;
    }
    for (auto& v : out) v /= total;
    return out;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream ids reserved per consumer so that no two consumers share draws.
namespace streams {
inline constexpr std::uint64_t kQuadraticSuite = 1;
inline constexpr std::uint64_t kGroupedData = 2;
inline constexpr std::uint64_t kNetInit = 3;
inline constexpr std::uint64_t kTrainAlphas = 4;
inline constexpr std::uint64_t kTestAlphas = 5;
inline constexpr std::uint64_t kOnlineCoins = 6;
inline constexpr std::uint64_t kOnlineStream = 7;
inline constexpr std::uint64_t kAudit = 8;
inline constexpr std::uint64_t kTarget = 9;
inline constexpr std::uint64_t kMinibatchTarget = 100;
/// Source j draws its minibatches from kMinibatchSourceBase + j.
inline constexpr std::uint64_t kMinibatchSourceBase = 1000;
}  // namespace streams

}  // namespace mixopt
