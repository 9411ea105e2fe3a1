#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/core.hpp"
#include "gazeseg/rng.hpp"

namespace gazeseg {

// Screen = offset + scale * image.
struct Viewport {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;
  double display_density = 7.21;  // px/mm, informational
};

nlohmann::json viewport_to_json(const Viewport& vp);
Viewport viewport_from_json(const nlohmann::json& j);

struct Fixation {
  double cx = 0.0;
  double cy = 0.0;
  double start_t = 0.0;
  double end_t = 0.0;
  std::size_t sample_count = 0;
};

struct FixationParams {
  double dispersion_px = 30.0;
  double min_duration_ms = 100.0;
};

inline constexpr double kTrackerRateHz = 90.0;

GazeSample map_screen_to_image(const GazeSample& screen, const Viewport& vp, int height, int width);
GazeSample map_image_to_screen(const GazeSample& image, const Viewport& vp);

// Dispersion-threshold (I-DT) grouping. Windows never span an out-of-image
// sample. Throws InvalidParam on non-positive parameters.
std::vector<Fixation> detect_fixations(const GazeStream& stream, const FixationParams& params = {});

struct GazeNoiseParams {
  double jitter_std = 0.0;
  double rate_hz = kTrackerRateHz;
  double dwell_ms = 100.0;
  // When set, samples outside [0,W)x[0,H) are flagged in_image = false.
  std::optional<std::pair<int, int>> bounds;
};

// Dwell-and-jitter simulation around each target point; timestamps run
// continuously at 1000/rate_hz spacing from t = 0.
GazeStream synthesize_gaze_noise(std::span<const Point2> points, const GazeNoiseParams& params,
                                 Rng& rng);

// One JSON object per line: {"t":ms,"x":float,"y":float,"src":"..."}.
std::string format_gaze_line(const GazeSample& s, GazeSource src);
GazeSample parse_gaze_line(std::string_view line, GazeSource* src = nullptr);
// Throws ProtocolError on bad lines or when timestamps decrease.
GazeStream read_gaze_log(std::string_view text);

}  // namespace gazeseg
