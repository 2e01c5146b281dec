#pragma once

#include <cstdint>
#include <random>

namespace slimfair {

using Rng = std::mt19937_64;

// Stream tags for seed fan-out. Each (master, tag, index) triple yields an
// independent engine, so adding a client never shifts another client's stream.
enum class Stream : std::uint32_t {
  Data = 1,
  Partition = 2,
  Init = 3,
  ClientTrain = 4,
  Standalone = 5,
  Anneal = 6,
  Participation = 7,
  Noise = 8,
};

inline Rng derive_rng(std::uint64_t master, Stream tag, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace slimfair
