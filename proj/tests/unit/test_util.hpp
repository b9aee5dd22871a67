#pragma once

#include <cstdint>

#include "vimf/rng.hpp"
#include "vimf/tensor.hpp"

namespace vimf::testing_util {

inline Tensor randn(std::uint64_t seed, Shape shape, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = scale * rng.normal();
  return t;
}

inline Tensor randu(std::uint64_t seed, Shape shape, double lo, double hi) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace vimf::testing_util
