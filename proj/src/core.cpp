#include "gazeseg/core.hpp"

#include <algorithm>
#include <cmath>

#include "gazeseg/error.hpp"

namespace gazeseg {

namespace {

constexpr std::array<std::string_view, kOrganCount + 1> kStructureNames = {
    "none",        "liver",     "spleen",   "kidney_left", "kidney_right", "stomach",
    "gallbladder", "esophagus", "pancreas", "duodenum",    "colon",        "intestine",
    "adrenal",     "rectum",    "bladder",  "head_of_femur_left", "head_of_femur_right",
};

}  // namespace

std::string_view structure_name(Structure s) {
  return kStructureNames[static_cast<std::size_t>(s)];
}

std::optional<Structure> parse_structure(std::string_view name) {
  for (std::size_t i = 0; i < kStructureNames.size(); ++i) {
    if (kStructureNames[i] == name) return static_cast<Structure>(i);
  }
  return std::nullopt;
}

std::optional<Structure> structure_from_label_id(int id) {
  if (id < 1 || id > kOrganCount) return std::nullopt;
  return static_cast<Structure>(id);
}

int round_coord(double v) { return static_cast<int>(std::ceil(v - 0.5)); }

ImageSlice::ImageSlice(int height, int width, std::vector<double> intensities, int slice_index,
                       std::string case_id)
    : height_(height),
      width_(width),
      intensities_(std::move(intensities)),
      slice_index_(slice_index),
      case_id_(std::move(case_id)) {
  if (height_ < 1 || width_ < 1) fail(ErrorCode::kInvalidParam, "image dimensions must be >= 1");
  if (intensities_.size() != static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_)) {
    fail(ErrorCode::kInvalidParam, "intensity count does not match H*W");
  }
  for (double v : intensities_) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::kInvalidParam, "intensity outside [0,1]");
  }
}

ImageSlice ImageSlice::filled(int height, int width, double value) {
  return ImageSlice(height, width,
                    std::vector<double>(static_cast<std::size_t>(height) * width, value));
}

Mask::Mask(int height, int width, Structure structure)
    : height_(height),
      width_(width),
      bits_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), 0),
      structure_(structure) {
  if (height < 0 || width < 0) fail(ErrorCode::kInvalidParam, "negative mask dimensions");
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> bits, Structure structure)
    : height_(height), width_(width), bits_(std::move(bits)), structure_(structure) {
  if (height < 0 || width < 0) fail(ErrorCode::kInvalidParam, "negative mask dimensions");
  if (bits_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    fail(ErrorCode::kInvalidParam, "mask bit count does not match H*W");
  }
  for (auto& b : bits_) {
    if (b > 1) fail(ErrorCode::kInvalidParam, "mask values must be 0 or 1");
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::string_view gaze_source_name(GazeSource s) {
  switch (s) {
    case GazeSource::kSynthetic: return "synthetic";
    case GazeSource::kMouseProxy: return "mouse-proxy";
    case GazeSource::kTracker: return "tracker";
  }
  return "synthetic";
}

std::optional<GazeSource> parse_gaze_source(std::string_view s) {
  if (s == "synthetic") return GazeSource::kSynthetic;
  if (s == "mouse-proxy") return GazeSource::kMouseProxy;
  if (s == "tracker") return GazeSource::kTracker;
  return std::nullopt;
}

bool GazeStream::sorted() const {
  return std::is_sorted(samples.begin(), samples.end(),
                        [](const GazeSample& a, const GazeSample& b) { return a.t < b.t; });
}

PointPrompt PointPrompt::padded(int capacity, std::span<const PromptPoint> live) {
  if (capacity < 1 || capacity > kMaxPromptCapacity) {
    fail(ErrorCode::kInvalidParam, "prompt capacity must be in [1, 50]");
  }
  if (live.size() > static_cast<std::size_t>(capacity)) {
    fail(ErrorCode::kInvalidParam, "more live points than prompt capacity");
  }
  PointPrompt p;
  p.capacity_ = capacity;
  p.points_.reserve(static_cast<std::size_t>(capacity));
  for (const auto& pt : live) {
    if (pt.label != kLabelForeground && pt.label != kLabelBackground) {
      fail(ErrorCode::kInvalidParam, "live prompt labels must be 0 or 1");
    }
    p.points_.push_back(pt);
  }
  p.points_.resize(static_cast<std::size_t>(capacity), PromptPoint{0.0, 0.0, kLabelPadding});
  return p;
}

std::size_t PointPrompt::live_count() const {
  return static_cast<std::size_t>(std::count_if(
      points_.begin(), points_.end(), [](const PromptPoint& p) { return p.label != kLabelPadding; }));
}

std::vector<PromptPoint> PointPrompt::live_points() const {
  std::vector<PromptPoint> out;
  for (const auto& p : points_) {
    if (p.label != kLabelPadding) out.push_back(p);
  }
  return out;
}

bool PointPrompt::has_foreground() const {
  return std::any_of(points_.begin(), points_.end(),
                     [](const PromptPoint& p) { return p.label == kLabelForeground; });
}

std::string_view region_name(Region r) {
  switch (r) {
    case Region::kGroundTruth: return "gt";
    case Region::kDifference: return "diff";
    case Region::kOutside: return "out";
  }
  return "out";
}

Mask mask_difference(const Mask& predicted, const Mask& reference) {
  if (!predicted.same_shape(reference)) {
    fail(ErrorCode::kShapeMismatch, "mask_difference: predicted and reference shapes differ");
  }
  Mask out(reference.height(), reference.width(), reference.structure());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    out.set(i, predicted.at(i) != reference.at(i));
  }
  return out;
}

Region region_membership(Point2 point, const Mask& gt, const Mask& diff) {
  if (!gt.same_shape(diff)) fail(ErrorCode::kShapeMismatch, "region_membership: mask shapes differ");
  const int col = round_coord(point.x);
  const int row = round_coord(point.y);
  if (!gt.contains(row, col)) fail(ErrorCode::kOutOfBounds, "point outside image bounds");
  if (diff.at(row, col)) return Region::kDifference;
  if (gt.at(row, col)) return Region::kGroundTruth;
  return Region::kOutside;
}

}  // namespace gazeseg
