#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mtqsar {

// splitmix64 finalizer (Steele, Lea & Flood 2014). Used both as the
// fingerprint mixing hash and to derive independent RNG streams.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline constexpr std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  return mix64(state);
}

// Deterministic 64-bit generator (xoshiro256**, Blackman & Vigna).
// All randomized behavior in the library flows through this type so that
// results are identical for a given seed regardless of platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() noexcept {
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

  // Uniform in [0, 1) with 53 random bits; bit-reproducible.
  double next_double() noexcept { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, bound) via rejection sampling.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  bool next_bool(double p_true) noexcept { return next_double() < p_true; }

  // Standard normal via Box-Muller; one value per call, cached pair unused
  // to keep stream consumption independent of call parity.
  double next_normal() noexcept {
    for (;;) {
      const double u1 = next_double();
      const double u2 = next_double();
      if (u1 <= 0.0) continue;
      return std::sqrt(-2.0 * std::log(u1)) *
             std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = std::size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Derives a stream seed from a master seed and a short tag, so that each
// consumer (init, batches, dropout, per-task label noise, ...) owns an
// independent generator whose output does not depend on call order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) noexcept {
  std::uint64_t h = mix64(master ^ 0x6a09e667f3bcc908ULL);
  for (char c : tag) h = mix64(h ^ std::uint64_t(static_cast<unsigned char>(c)));
  return mix64(h ^ mix64(index ^ 0xbb67ae8584caa73bULL));
}

}  // namespace mtqsar
