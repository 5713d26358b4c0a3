#include "bsdelab/rng.hpp"

#include <cmath>
#include <numbers>

namespace bsdelab {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void round(Philox4x32Ctr& c, const Philox4x32Key& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  // 53 random bits, shifted by half an ulp so 0 is never produced
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox4x32Ctr philox4x32(Philox4x32Ctr ctr, Philox4x32Key key) {
  for (int r = 0; r < 10; ++r) {
    round(ctr, key);
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t path, Stream stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      path_lo_(static_cast<std::uint32_t>(path)),
      path_hi_(static_cast<std::uint32_t>(path >> 32)),
      stream_(static_cast<std::uint32_t>(stream)) {}

Philox4x32Ctr CounterRng::block(std::uint64_t index) const {
  const auto lo = static_cast<std::uint32_t>(index);
  const auto hi = static_cast<std::uint32_t>(index >> 32) & 0x00FFFFFFu;
  return philox4x32({lo, hi | (stream_ << 24), path_lo_, path_hi_}, key_);
}

double CounterRng::uniform(std::uint64_t index) const {
  const auto b = block(index);
  return to_unit(b[0], b[1]);
}

std::pair<double, double> CounterRng::normal_pair(std::uint64_t index) const {
  const auto b = block(index);
  const double u1 = to_unit(b[0], b[1]);
  const double u2 = to_unit(b[2], b[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

double CounterRng::normal(std::uint64_t index) const {
  const auto [z0, z1] = normal_pair(index >> 1);
  return (index & 1u) ? z1 : z0;
}

}  // namespace bsdelab
