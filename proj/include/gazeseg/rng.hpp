#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gazeseg {

using Rng = std::mt19937_64;

// Independent sub-streams for the different consumers of randomness in one
// (case, structure) work unit.
enum class SeedStream : std::uint64_t {
  kGeneration = 0x67656e,
  kStrategy = 0x737472,
  kCapacity = 0x636170,
  kSession = 0x736573,
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable hash of (master_seed, case_id, structure, iteration, stream).
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view case_id,
                          std::string_view structure, std::uint64_t iteration,
                          SeedStream stream = SeedStream::kGeneration);

std::size_t uniform_index(Rng& rng, std::size_t n);
double uniform01(Rng& rng);

// k distinct indices from [0, n) in random order (sparse Fisher-Yates).
// Requires k <= n.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace gazeseg
