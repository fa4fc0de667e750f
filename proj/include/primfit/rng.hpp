#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace primfit {

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of substream `stream` under `seed`. Every random quantity in the
/// toolkit is drawn from a substream named by a fixed stream id, so adding a
/// consumer never shifts the values seen by another.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// mt19937_64 with a portable double conversion (top 53 bits), so sequences do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0, without modulo bias.
  std::uint64_t index(std::uint64_t n);
  /// Uniform on the unit sphere.
  Eigen::Vector3d unit_vector();
  Eigen::Vector3d in_box(double half_extent);

  Rng split(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace primfit
