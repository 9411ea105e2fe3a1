#include "gazeseg/gaze_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gazeseg/error.hpp"

namespace gazeseg {

void RegionProportions::validate() const {
  for (double p : as_array()) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::kInvalidParam, "proportions must lie in [0,1]");
  }
  if (std::abs(gt + diff + out - 1.0) > 1e-9) {
    fail(ErrorCode::kInvalidParam, "proportions must sum to 1");
  }
}

RegionCounts quota_split(std::size_t n, const RegionProportions& props,
                         const RegionCounts& availability) {
  const auto p = props.as_array();
  RegionCounts counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    const double quota = static_cast<double>(n) * p[r];
    // Absorb representation error so that e.g. 20 * 0.7 floors to 14.
    const double fl = std::floor(quota + 1e-9);
    counts[r] = static_cast<std::size_t>(fl);
    remainder[r] = std::max(0.0, quota - fl);
    assigned += counts[r];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-12;
  });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
    ++counts[order[k]];
    ++assigned;
  }

  std::size_t excess = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    if (counts[r] > availability[r]) {
      excess += counts[r] - availability[r];
      counts[r] = availability[r];
    }
  }
  for (std::size_t r = 0; r < 3 && excess > 0; ++r) {
    const std::size_t room = availability[r] - counts[r];
    const std::size_t take = std::min(room, excess);
    counts[r] += take;
    excess -= take;
  }
  return counts;
}

GeneratedPoints generate_prompt_points(const Mask& gt, const Mask* predicted,
                                       const GazeGenConfig& cfg, Rng& rng) {
  cfg.props.validate();
  if (cfg.n_points < 1) fail(ErrorCode::kInvalidParam, "n_points must be >= 1");
  if (gt.empty()) fail(ErrorCode::kEmptyGroundTruth, "ground-truth mask has no pixels");
  if (cfg.props.diff > 0.0 && predicted == nullptr) {
    fail(ErrorCode::kInvalidParam, "prop_diff > 0 requires a predicted mask");
  }
  const Mask diff = predicted != nullptr ? mask_difference(*predicted, gt)
                                         : Mask(gt.height(), gt.width(), gt.structure());

  std::array<std::vector<std::size_t>, 3> pixels;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::size_t r = diff.at(i) ? 1 : (gt.at(i) ? 0 : 2);
    pixels[r].push_back(i);
  }
  const RegionCounts avail{pixels[0].size(), pixels[1].size(), pixels[2].size()};
  GeneratedPoints result;
  result.counts = quota_split(cfg.n_points, cfg.props, avail);
  result.infeasible_quota = avail[0] + avail[1] + avail[2] < cfg.n_points;

  constexpr std::array<Region, 3> kRegions = {Region::kGroundTruth, Region::kDifference,
                                              Region::kOutside};
  const auto width = static_cast<std::size_t>(gt.width());
  for (std::size_t r = 0; r < 3; ++r) {
    const auto picks = sample_without_replacement(rng, pixels[r].size(), result.counts[r]);
    for (std::size_t idx : picks) {
      const std::size_t flat = pixels[r][idx];
      const double col = static_cast<double>(flat % width);
      const double row = static_cast<double>(flat / width);
      // 0.5 - u, u in [0,1): offset in (-0.5, 0.5], which rounds back to the pixel.
      const double dx = 0.5 - uniform01(rng);
      const double dy = 0.5 - uniform01(rng);
      result.points.push_back({{col + dx, row + dy}, kRegions[r]});
    }
  }
  return result;
}

GeneratedPoints generate_prompt_points(const Mask& gt, const Mask* predicted,
                                       const GazeGenConfig& cfg) {
  Rng rng(cfg.seed);
  return generate_prompt_points(gt, predicted, cfg, rng);
}

std::vector<Point2> points_of(const GeneratedPoints& g) {
  std::vector<Point2> out;
  out.reserve(g.points.size());
  for (const auto& tp : g.points) out.push_back(tp.point);
  return out;
}

}  // namespace gazeseg
