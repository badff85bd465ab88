#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (key, counter), so datasets do not depend on generation order or on how work
// is split across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace fedmix::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
[[nodiscard]] constexpr Counter philox4x32(Counter ctr, Key key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// SplitMix64 finalizer; used to derive child seeds.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Child seed for stream `index` under `parent`. Distinct (parent, index)
/// pairs give unrelated seeds.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(mix64(parent) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

/// Field tags keep independent quantities on disjoint counters.
enum class Tag : std::uint32_t { label = 1, covariate = 2, noise = 3, init = 4 };

class Stream {
public:
  constexpr explicit Stream(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  /// 128 random bits for (i, j, tag, block).
  [[nodiscard]] constexpr Counter bits(std::uint32_t i, std::uint32_t j, Tag tag,
                                       std::uint32_t block) const noexcept {
    return philox4x32({i, j, static_cast<std::uint32_t>(tag), block}, key_);
  }

  /// Two uniforms in [0, 1) with 53-bit resolution.
  [[nodiscard]] std::pair<double, double> uniform2(std::uint32_t i, std::uint32_t j, Tag tag,
                                                   std::uint32_t block) const noexcept {
    const auto r = bits(i, j, tag, block);
    const std::uint64_t a = (std::uint64_t{r[0]} << 32) | r[1];
    const std::uint64_t b = (std::uint64_t{r[2]} << 32) | r[3];
    return {to_unit(a), to_unit(b)};
  }

  /// Two independent standard normals (Box-Muller).
  [[nodiscard]] std::pair<double, double> normal2(std::uint32_t i, std::uint32_t j, Tag tag,
                                                  std::uint32_t block) const noexcept {
    auto [u1, u2] = uniform2(i, j, tag, block);
    const double radius = std::sqrt(-2.0 * std::log1p(-u1));  // 1 - u1 in (0, 1]
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  /// Fills out[0..count) with standard normals from consecutive blocks.
  template <typename Out>
  void normals(std::uint32_t i, std::uint32_t j, Tag tag, Out &out, std::size_t count) const {
    for (std::size_t c = 0; c < count; c += 2) {
      const auto [z0, z1] = normal2(i, j, tag, static_cast<std::uint32_t>(c / 2));
      out[c] = z0;
      if (c + 1 < count) out[c + 1] = z1;
    }
  }

private:
  static constexpr double to_unit(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

  Key key_;
};

}  // namespace fedmix::rng
