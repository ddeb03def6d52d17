#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace warpreg {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream (xoshiro256** core). All distributions are
/// implemented explicitly so sequences are identical across standard
/// libraries and platforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = detail::splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4] = {};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Named substream so a single user seed drives independent generators
/// (init, dropout, data, ...) that stay stable when other flags change.
inline RngStream substream(std::uint64_t root_seed, std::string_view name) {
  std::uint64_t state = root_seed ^ detail::fnv1a(name);
  return RngStream(detail::splitmix64(state));
}

/// Substream further keyed by an index (per-image, per-pair seeds).
inline RngStream substream(std::uint64_t root_seed, std::string_view name, std::uint64_t index) {
  std::uint64_t state = root_seed ^ detail::fnv1a(name);
  state = detail::splitmix64(state) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return RngStream(detail::splitmix64(state));
}

/// Derived seed value for components that take a seed rather than a stream.
inline std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name,
                                 std::uint64_t index = 0) {
  std::uint64_t state = root_seed ^ detail::fnv1a(name);
  state = detail::splitmix64(state) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return detail::splitmix64(state);
}

}  // namespace warpreg
