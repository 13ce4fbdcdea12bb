#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pixobj {

// Named, index-addressable random streams derived from one master seed. A
// stream for (seed, name, i) is independent of how many draws earlier
// indices consumed, which is what makes mid-run resume reproducible.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0,
                          std::uint64_t sub = 0);

inline std::mt19937_64 stream_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0,
                                  std::uint64_t sub = 0) {
  return std::mt19937_64(derive_seed(master, stream, index, sub));
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace pixobj
