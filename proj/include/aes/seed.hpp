#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace aes {

// Sub-seed for a named stage: splitmix64(root ^ fnv1a64(stage)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage);

// Uniform integer in [0, bound) by rejection sampling on raw 64-bit output.
// std::uniform_int_distribution is implementation-defined, so it is avoided
// wherever results must match across standard libraries.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound);

// Uniform real in [0, 1) from the top 53 bits.
double uniform_unit(std::mt19937_64& rng);

// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::span<T> items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  shuffle(std::span<T>(items), rng);
}

}  // namespace aes
