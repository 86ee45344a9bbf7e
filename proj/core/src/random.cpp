#include "msmgp/random.hpp"

#include <cmath>
#include <numbers>

namespace msmgp {
namespace {

constexpr std::uint64_t splitmix(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t index) const noexcept {
  return splitmix(splitmix(splitmix(seed_) ^ stream) ^ index);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t index) const noexcept {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(bits(stream, index) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t index) const noexcept {
  const double u1 = uniform(stream, 2 * index);
  const double u2 = uniform(stream, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace msmgp
