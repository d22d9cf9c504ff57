#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, path, step, block), so results do not depend on the
// order in which paths are scheduled.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace erg {

/// Philox4x32-10 block cipher used as a keyed counter RNG.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit constexpr Philox4x32(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  constexpr Philox4x32(std::uint32_t k0, std::uint32_t k1) noexcept : key_{k0, k1} {}

  [[nodiscard]] constexpr Block operator()(Block ctr) const noexcept {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = Block{static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                  static_cast<std::uint32_t>(p1),
                  static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                  static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  std::array<std::uint32_t, 2> key_;
};

/// Streams separate independent uses of one seed.
enum class RngStream : std::uint32_t {
  brownian = 0,
  validation = 1,
  opponent = 2,
  misc = 3,
};

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept : cipher_(seed) {}

  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  [[nodiscard]] std::array<double, 2> uniform_pair(RngStream stream, std::uint32_t a, std::uint32_t b,
                                                   std::uint32_t block) const noexcept {
    const auto out = cipher_({a, b, block, static_cast<std::uint32_t>(stream)});
    const std::uint64_t w0 = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    const std::uint64_t w1 = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    return {to_unit(w0), to_unit(w1)};
  }

  [[nodiscard]] std::array<double, 2> normal_pair(RngStream stream, std::uint32_t a, std::uint32_t b,
                                                  std::uint32_t block) const noexcept {
    const auto [u1, u2] = uniform_pair(stream, a, b, block);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  /// Fills `out` with independent standard normals for counter (a, b).
  void normals(RngStream stream, std::uint32_t a, std::uint32_t b, std::span<double> out) const noexcept {
    std::uint32_t block = 0;
    std::size_t i = 0;
    while (i < out.size()) {
      const auto z = normal_pair(stream, a, b, block++);
      out[i++] = z[0];
      if (i < out.size()) out[i++] = z[1];
    }
  }

  /// Uniform in [lo, hi) for counter (a, b), consumed pairwise.
  void uniforms(RngStream stream, std::uint32_t a, std::uint32_t b, std::span<double> out) const noexcept {
    std::uint32_t block = 0;
    std::size_t i = 0;
    while (i < out.size()) {
      const auto z = uniform_pair(stream, a, b, block++);
      out[i++] = z[0];
      if (i < out.size()) out[i++] = z[1];
    }
  }

  /// Uniform index in [0, n) for counter (a, b).
  [[nodiscard]] std::size_t index(RngStream stream, std::uint32_t a, std::uint32_t b, std::size_t n) const noexcept {
    const auto z = uniform_pair(stream, a, b, 0);
    const auto k = static_cast<std::size_t>(z[0] * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

 private:
  static double to_unit(std::uint64_t w) noexcept {
    return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
  }

  Philox4x32 cipher_;
};

}  // namespace erg
