#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hytas {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;
// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
// Independent child seed for (parent, salt).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::string_view salt) noexcept;

// Normal(0, stddev) resampled until it falls inside +-2 stddev.
double truncated_normal(Rng& rng, double stddev);

}  // namespace hytas
