#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gazeseg {

// WORD organ set, in the dataset's label-id order (id = index + 1).
enum class Structure : std::uint8_t {
  kNone = 0,
  kLiver,
  kSpleen,
  kKidneyLeft,
  kKidneyRight,
  kStomach,
  kGallbladder,
  kEsophagus,
  kPancreas,
  kDuodenum,
  kColon,
  kIntestine,
  kAdrenal,
  kRectum,
  kBladder,
  kHeadOfFemurLeft,
  kHeadOfFemurRight,
};

inline constexpr int kOrganCount = 16;

std::string_view structure_name(Structure s);
std::optional<Structure> parse_structure(std::string_view name);
// 1..16 -> organ; anything else -> nullopt.
std::optional<Structure> structure_from_label_id(int id);
inline int label_id(Structure s) { return static_cast<int>(s); }

struct Pixel {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Nearest pixel index for a fractional coordinate; exact .5 ties go to the
// lower index.
int round_coord(double v);

class ImageSlice {
 public:
  ImageSlice() = default;
  ImageSlice(int height, int width, std::vector<double> intensities, int slice_index = 0,
             std::string case_id = {});

  static ImageSlice filled(int height, int width, double value);

  int height() const { return height_; }
  int width() const { return width_; }
  int slice_index() const { return slice_index_; }
  const std::string& case_id() const { return case_id_; }
  std::span<const double> intensities() const { return intensities_; }

  double at(int row, int col) const { return intensities_[index(row, col)]; }
  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> intensities_;
  int slice_index_ = 0;
  std::string case_id_;
};

class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, Structure structure = Structure::kNone);
  Mask(int height, int width, std::vector<std::uint8_t> bits,
       Structure structure = Structure::kNone);

  int height() const { return height_; }
  int width() const { return width_; }
  Structure structure() const { return structure_; }
  void set_structure(Structure s) { structure_ = s; }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t size() const { return bits_.size(); }

  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  bool at(std::size_t i) const { return bits_[i] != 0; }
  void set(int row, int col, bool v = true) { bits_[index(row, col)] = v ? 1 : 0; }
  void set(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }

  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool same_shape(const Mask& o) const { return height_ == o.height_ && width_ == o.width_; }

  // Bitwise equality; the structure label is not compared.
  bool same_pixels(const Mask& o) const { return same_shape(o) && bits_ == o.bits_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
  Structure structure_ = Structure::kNone;
};

enum class GazeSource { kSynthetic, kMouseProxy, kTracker };
std::string_view gaze_source_name(GazeSource s);
std::optional<GazeSource> parse_gaze_source(std::string_view s);

struct GazeSample {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;  // ms
  bool in_image = true;
};

struct GazeStream {
  std::vector<GazeSample> samples;
  GazeSource source = GazeSource::kSynthetic;

  bool sorted() const;
};

struct Point2 {
  double x = 0.0;  // column
  double y = 0.0;  // row
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline constexpr int kLabelForeground = 1;
inline constexpr int kLabelBackground = 0;
inline constexpr int kLabelPadding = -1;
inline constexpr int kMaxPromptCapacity = 50;

struct PromptPoint {
  double x = 0.0;
  double y = 0.0;
  int label = kLabelPadding;
  friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

// Fixed-capacity prompt. Live entries come first; the remainder is padding
// at (0,0) with label -1.
class PointPrompt {
 public:
  PointPrompt() = default;

  // Throws InvalidParam on a bad capacity, a label outside {1,0} among the
  // live points, or more live points than capacity.
  static PointPrompt padded(int capacity, std::span<const PromptPoint> live);

  int capacity() const { return capacity_; }
  const std::vector<PromptPoint>& points() const { return points_; }
  std::size_t live_count() const;
  std::vector<PromptPoint> live_points() const;
  bool has_foreground() const;
  bool empty() const { return capacity_ == 0; }

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;

 private:
  int capacity_ = 0;
  std::vector<PromptPoint> points_;
};

enum class Region { kGroundTruth, kDifference, kOutside };
std::string_view region_name(Region r);

// XOR of the two masks; structure label taken from `reference`.
Mask mask_difference(const Mask& predicted, const Mask& reference);

// Priority diff > gt > out. Throws OutOfBounds when the rounded point lies
// outside the masks.
Region region_membership(Point2 point, const Mask& gt, const Mask& diff);

}  // namespace gazeseg
