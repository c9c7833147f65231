#pragma once

#include <cstdint>
#include <random>

#include "fsl/tensor.hpp"

namespace fsl {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream `stream` of base seed `seed`; used so that episode e,
/// epoch e, etc. never depend on how many draws earlier streams consumed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(stream_seed(seed, stream));
}

/// Uniform on [-sqrt(1/fan_in), +sqrt(1/fan_in)].
Tensor fan_in_uniform(Shape shape, Index fan_in, Rng& rng);

Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);
Tensor normal(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

}  // namespace fsl
