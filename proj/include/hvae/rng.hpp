#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace hvae {

using Rng = std::mt19937_64;

/// Engine keyed by a base seed and a tuple of stream coordinates, so that
/// e.g. (seed, round, element) always yields the same draws regardless of
/// how work is scheduled.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace hvae
