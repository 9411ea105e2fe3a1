#include "gazeseg/rng.hpp"

#include <unordered_map>

#include "gazeseg/error.hpp"

namespace gazeseg {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view case_id,
                          std::string_view structure, std::uint64_t iteration, SeedStream stream) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ fnv1a(case_id));
  h = splitmix64(h ^ fnv1a(structure));
  h = splitmix64(h ^ iteration);
  return splitmix64(h ^ static_cast<std::uint64_t>(stream));
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) fail(ErrorCode::kInvalidParam, "uniform_index over an empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) fail(ErrorCode::kInvalidParam, "cannot sample more items than available");
  std::unordered_map<std::size_t, std::size_t> swapped;
  swapped.reserve(k * 2);
  auto value_at = [&](std::size_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    const std::size_t vi = value_at(i);
    const std::size_t vj = value_at(j);
    out.push_back(vj);
    swapped[j] = vi;
  }
  return out;
}

}  // namespace gazeseg
