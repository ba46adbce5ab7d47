#pragma once

// Seeded random streams. Every consumer (data shuffling, reparameterization
// noise, permutations, interpolation draws, beta sampling, initialization)
// gets its own stream derived from the run's master seed and a stream name,
// so changing how many draws one consumer makes never shifts another.

#include "infosep/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace infosep {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  return splitmix64(splitmix64(master) ^ fnv1a(stream));
}

inline Rng make_stream(std::uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

inline ad::Matrix standard_normal(ad::Index rows, ad::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline ad::Matrix uniform01(ad::Index rows, ad::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
  return m;
}

}  // namespace infosep
