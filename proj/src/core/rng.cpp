#include "vimf/rng.hpp"

#include <cmath>
#include <numbers>

namespace vimf {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view bytes) { return fnv1a64(bytes.data(), bytes.size()); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::string_view label) { return splitmix64(seed) ^ fnv1a64(label); }

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(seed) ^ splitmix64(~index); }

Rng Rng::derive(std::uint64_t seed, std::string_view label) { return Rng(derive_seed(seed, label)); }

Rng Rng::derive(std::uint64_t seed, std::uint64_t index) { return Rng(derive_seed(seed, index)); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

}  // namespace vimf
