#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gazeseg/core.hpp"
#include "gazeseg/rng.hpp"

namespace gazeseg {

// Fractions of generated points per region, indexed gt, diff, out.
struct RegionProportions {
  double gt = 1.0;
  double diff = 0.0;
  double out = 0.0;

  std::array<double, 3> as_array() const { return {gt, diff, out}; }
  // Throws InvalidParam unless every entry is in [0,1] and the sum is 1 ± 1e-9.
  void validate() const;
};

struct GazeGenConfig {
  RegionProportions props;
  std::size_t n_points = 20;
  std::uint64_t seed = 0;
};

using RegionCounts = std::array<std::size_t, 3>;  // gt, diff, out

// Largest-remainder apportionment of n seats (ties: gt, diff, out), then any
// quota above its region's availability is moved to the other regions in the
// order gt -> diff -> out. Counts sum to min(n, total availability).
RegionCounts quota_split(std::size_t n, const RegionProportions& props,
                         const RegionCounts& availability);

struct TaggedPoint {
  Point2 point;
  Region region = Region::kGroundTruth;
};

struct GeneratedPoints {
  std::vector<TaggedPoint> points;
  RegionCounts counts{};
  // Fewer pixels exist than n_points; every pixel was returned.
  bool infeasible_quota = false;
};

// Region pixel sets follow region_membership with diff = predicted XOR gt
// (empty when no prediction is given). Pixels are drawn uniformly without
// replacement; each coordinate gets a uniform offset inside its rounding
// cell so that rounding recovers the drawn pixel.
// Throws EmptyGroundTruth, ShapeMismatch, or InvalidParam (prop_diff > 0
// with no prediction).
GeneratedPoints generate_prompt_points(const Mask& gt, const Mask* predicted,
                                       const GazeGenConfig& cfg, Rng& rng);

// Convenience overload seeding its own generator from cfg.seed.
GeneratedPoints generate_prompt_points(const Mask& gt, const Mask* predicted,
                                       const GazeGenConfig& cfg);

std::vector<Point2> points_of(const GeneratedPoints& g);

}  // namespace gazeseg
