#pragma once

#include <cstdint>

namespace msmgp {

/// Stateless counter-based generator: every (seed, stream, index) triple maps
/// to a fixed value, so Monte Carlo draws do not depend on evaluation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(std::uint64_t stream, std::uint64_t index) const noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t index) const noexcept;

  /// Standard normal via Box-Muller on two consecutive counters.
  double normal(std::uint64_t stream, std::uint64_t index) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace msmgp
