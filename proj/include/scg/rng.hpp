#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "scg/tensor.hpp"

namespace scg {

using Rng = std::mt19937_64;

// Mixes a base seed with stream coordinates (epoch, step, item, ...) so that
// every stochastic stage can be replayed independently.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

}  // namespace scg
