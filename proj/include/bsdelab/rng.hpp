#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace bsdelab {

using Philox4x32Ctr = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds (Salmon et al. 2011).
Philox4x32Ctr philox4x32(Philox4x32Ctr ctr, Philox4x32Key key);

enum class Stream : std::uint32_t {
  grid = 0,
  clock = 1,
  bridge = 2,
  lattice = 3,
  lattice_bridge = 4,
  aux = 5,
  lattice_uniform = 6,
};

// Stateless generator: every draw is addressed by (seed, path, stream, index),
// so results never depend on thread scheduling.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t path, Stream stream);

  Philox4x32Ctr block(std::uint64_t index) const;
  // Open interval (0,1), 53-bit resolution.
  double uniform(std::uint64_t index) const;
  std::pair<double, double> normal_pair(std::uint64_t index) const;
  // Standard normal number `index`; consecutive even/odd indices share one block.
  double normal(std::uint64_t index) const;

private:
  Philox4x32Key key_;
  std::uint32_t path_lo_;
  std::uint32_t path_hi_;
  std::uint32_t stream_;
};

}  // namespace bsdelab
