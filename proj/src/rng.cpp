#include "hytas/rng.hpp"

#include <cmath>

namespace hytas {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept {
  return splitmix64(splitmix64(parent) ^ (salt + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view salt) noexcept {
  return derive_seed(parent, fnv1a64(salt));
}

double truncated_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (;;) {
    const double z = dist(rng);
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

}  // namespace hytas
