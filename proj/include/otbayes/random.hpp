#pragma once

#include "otbayes/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace otbayes {

/// SplitMix64 finalizer; a stateless bijective mix of a 64-bit counter.
std::uint64_t mix64(std::uint64_t x);

/// Stable 64-bit tag for a string (FNV-1a), used to name rng streams.
std::uint64_t tag_of(std::string_view name);

/// Derives an independent stream seed from a master seed and a tuple of tags.
/// The derivation is counter-based: adding a new tag tuple never perturbs the
/// seeds of existing tuples.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

Rng make_rng(std::uint64_t seed);

double standard_normal(Rng& rng);
Vector standard_normal(Rng& rng, Eigen::Index n);
double uniform01(Rng& rng);

}  // namespace otbayes
