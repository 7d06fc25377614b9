#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace scsam {

using Rng = std::mt19937_64;

// Independent random stream derived from a base seed and a stream path,
// e.g. make_rng(seed, {kAugmentStream, step, slot}). Streams with different
// paths are uncorrelated for practical purposes.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

}  // namespace scsam
