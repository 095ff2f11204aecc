#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace etm {

// All randomness in the library flows through this engine type. Distributions
// are constructed per draw so that the engine state alone is the full RNG
// state (and can be checkpointed).
using Rng = std::mt19937_64;

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// k distinct positions out of [0, n) in draw order (partial Fisher-Yates).
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k);

/// Draws k distinct elements of `pool` in draw order.
template <typename T>
std::vector<T> sample_without_replacement(Rng& rng, const std::vector<T>& pool,
                                          std::size_t k) {
  std::vector<T> out;
  out.reserve(k);
  for (std::size_t i : sample_indices(rng, pool.size(), k)) out.push_back(pool[i]);
  return out;
}

std::string rng_state(const Rng& rng);
void restore_rng_state(Rng& rng, const std::string& state);

}  // namespace etm
