#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace hetprod {

/// Philox4x32-10 counter-based generator. A (key, counter) pair maps to four
/// 32-bit words with no hidden state, so any draw can be reproduced from its
/// coordinates regardless of which thread computes it.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter ctr) const {
    Key key = key_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;
  Key key_;
};

/// Addressable stream of uniforms and standard normals. A draw is named by
/// (stream, a, b, n): e.g. (noise, replication, firm, period).
class KeyedRandom {
 public:
  explicit KeyedRandom(std::uint64_t seed) : gen_(seed) {}

  // Two uniforms in [0, 1) with 53-bit resolution.
  std::array<double, 2> uniform2(std::uint32_t stream, std::uint32_t a, std::uint32_t b,
                                 std::uint32_t n) const {
    const auto w = gen_({n, b, a, stream});
    return {to_unit(w[0], w[1]), to_unit(w[2], w[3])};
  }

  double uniform(std::uint32_t stream, std::uint32_t a, std::uint32_t b,
                 std::uint32_t n) const {
    return uniform2(stream, a, b, n)[0];
  }

  // Box-Muller; draw n uses counter n / 2 and takes the cosine or sine arm.
  double normal(std::uint32_t stream, std::uint32_t a, std::uint32_t b,
                std::uint32_t n) const {
    const auto u = uniform2(stream, a, b, n / 2);
    const double radius = std::sqrt(-2.0 * std::log(1.0 - u[0]));
    const double angle = 2.0 * std::numbers::pi * u[1];
    return (n % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
  }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
    return static_cast<double>(bits & ((1ull << 53) - 1)) * 0x1.0p-53;
  }

  Philox4x32 gen_;
};

}  // namespace hetprod
