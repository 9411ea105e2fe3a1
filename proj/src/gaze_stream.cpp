#include "gazeseg/gaze_stream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gazeseg/error.hpp"

namespace gazeseg {

nlohmann::json viewport_to_json(const Viewport& vp) {
  return {{"offset_x", vp.offset_x},
          {"offset_y", vp.offset_y},
          {"scale", vp.scale},
          {"display_density", vp.display_density}};
}

Viewport viewport_from_json(const nlohmann::json& j) {
  Viewport vp;
  vp.offset_x = j.value("offset_x", 0.0);
  vp.offset_y = j.value("offset_y", 0.0);
  vp.scale = j.value("scale", 1.0);
  vp.display_density = j.value("display_density", 7.21);
  if (!(vp.scale > 0.0)) fail(ErrorCode::kInvalidParam, "viewport scale must be > 0");
  return vp;
}

GazeSample map_screen_to_image(const GazeSample& screen, const Viewport& vp, int height,
                               int width) {
  if (!(vp.scale > 0.0)) fail(ErrorCode::kInvalidParam, "viewport scale must be > 0");
  GazeSample out = screen;
  out.x = (screen.x - vp.offset_x) / vp.scale;
  out.y = (screen.y - vp.offset_y) / vp.scale;
  out.in_image = out.x >= 0.0 && out.x < width && out.y >= 0.0 && out.y < height;
  return out;
}

GazeSample map_image_to_screen(const GazeSample& image, const Viewport& vp) {
  GazeSample out = image;
  out.x = image.x * vp.scale + vp.offset_x;
  out.y = image.y * vp.scale + vp.offset_y;
  return out;
}

namespace {

double dispersion(std::span<const GazeSample> w) {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const auto& s : w) {
    min_x = std::min(min_x, s.x);
    max_x = std::max(max_x, s.x);
    min_y = std::min(min_y, s.y);
    max_y = std::max(max_y, s.y);
  }
  return (max_x - min_x) + (max_y - min_y);
}

Fixation make_fixation(std::span<const GazeSample> w) {
  Fixation f;
  for (const auto& s : w) {
    f.cx += s.x;
    f.cy += s.y;
  }
  f.cx /= static_cast<double>(w.size());
  f.cy /= static_cast<double>(w.size());
  f.start_t = w.front().t;
  f.end_t = w.back().t;
  f.sample_count = w.size();
  return f;
}

void idt_run(std::span<const GazeSample> run, const FixationParams& p, std::vector<Fixation>& out) {
  std::size_t i = 0;
  while (i < run.size()) {
    // Smallest window starting at i covering the minimum duration.
    std::size_t j = i;
    while (j < run.size() && run[j].t - run[i].t < p.min_duration_ms) ++j;
    if (j >= run.size()) break;
    if (dispersion(run.subspan(i, j - i + 1)) > p.dispersion_px) {
      ++i;
      continue;
    }
    while (j + 1 < run.size() && dispersion(run.subspan(i, j - i + 2)) <= p.dispersion_px) ++j;
    out.push_back(make_fixation(run.subspan(i, j - i + 1)));
    i = j + 1;
  }
}

}  // namespace

std::vector<Fixation> detect_fixations(const GazeStream& stream, const FixationParams& params) {
  if (!(params.dispersion_px > 0.0)) fail(ErrorCode::kInvalidParam, "dispersion_px must be > 0");
  if (!(params.min_duration_ms > 0.0)) fail(ErrorCode::kInvalidParam, "min_duration_ms must be > 0");
  std::vector<Fixation> out;
  std::span<const GazeSample> all(stream.samples);
  std::size_t start = 0;
  for (std::size_t k = 0; k <= all.size(); ++k) {
    if (k == all.size() || !all[k].in_image) {
      if (k > start) idt_run(all.subspan(start, k - start), params, out);
      start = k + 1;
    }
  }
  return out;
}

GazeStream synthesize_gaze_noise(std::span<const Point2> points, const GazeNoiseParams& params,
                                 Rng& rng) {
  if (!(params.rate_hz > 0.0)) fail(ErrorCode::kInvalidParam, "rate_hz must be > 0");
  if (params.jitter_std < 0.0 || params.dwell_ms < 0.0) {
    fail(ErrorCode::kInvalidParam, "jitter_std and dwell_ms must be >= 0");
  }
  GazeStream stream;
  stream.source = GazeSource::kSynthetic;
  const double period = 1000.0 / params.rate_hz;
  const auto per_point =
      static_cast<std::size_t>(std::floor(params.dwell_ms * params.rate_hz / 1000.0 + 1e-9));
  std::normal_distribution<double> jitter(0.0, params.jitter_std > 0.0 ? params.jitter_std : 1.0);
  std::size_t n = 0;
  for (const auto& p : points) {
    for (std::size_t k = 0; k < per_point; ++k, ++n) {
      GazeSample s;
      s.x = p.x;
      s.y = p.y;
      if (params.jitter_std > 0.0) {
        s.x += jitter(rng);
        s.y += jitter(rng);
      }
      s.t = static_cast<double>(n) * period;
      if (params.bounds) {
        const auto [h, w] = *params.bounds;
        s.in_image = s.x >= 0.0 && s.x < w && s.y >= 0.0 && s.y < h;
      }
      stream.samples.push_back(s);
    }
  }
  return stream;
}

std::string format_gaze_line(const GazeSample& s, GazeSource src) {
  nlohmann::json j = {{"t", s.t}, {"x", s.x}, {"y", s.y}, {"src", gaze_source_name(src)}};
  return j.dump();
}

GazeSample parse_gaze_line(std::string_view line, GazeSource* src) {
  try {
    const auto j = nlohmann::json::parse(line);
    GazeSample s;
    s.t = j.at("t").get<double>();
    s.x = j.at("x").get<double>();
    s.y = j.at("y").get<double>();
    if (src != nullptr) {
      const auto parsed = parse_gaze_source(j.value("src", "synthetic"));
      if (!parsed) fail(ErrorCode::kProtocolError, "unknown gaze source");
      *src = *parsed;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kProtocolError, std::string("bad gaze line: ") + e.what());
  }
}

GazeStream read_gaze_log(std::string_view text) {
  GazeStream stream;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    GazeSource src{};
    const auto s = parse_gaze_line(line, &src);
    if (first) {
      stream.source = src;
      first = false;
    }
    if (!stream.samples.empty() && s.t < stream.samples.back().t) {
      fail(ErrorCode::kProtocolError, "gaze log timestamps decrease");
    }
    stream.samples.push_back(s);
  }
  return stream;
}

}  // namespace gazeseg
