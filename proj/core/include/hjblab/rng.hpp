#pragma once

#include <array>
#include <cstdint>

namespace hjblab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Standard normal variate keyed by (seed, path, step, component).
/// Pure function: the same key always returns the same value.
double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t component);

/// N(0, dt) Brownian increment: sqrt(dt) * standard_normal(...).
double brownian_increment(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t component,
                          double dt);

}  // namespace hjblab
