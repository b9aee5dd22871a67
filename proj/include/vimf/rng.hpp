#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vimf {

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

// Seeded 64-bit generator. Distribution mapping is done here rather than with
// <random> distributions so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent stream derived from this seed and a label (e.g. a parameter name).
  static Rng derive(std::uint64_t seed, std::string_view label);
  static Rng derive(std::uint64_t seed, std::uint64_t index);
  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace vimf
