#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/core.hpp"

namespace gazeseg {

// ---- NIfTI-1 volumes -------------------------------------------------------

enum class NiftiDatatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
};

std::string_view datatype_name(NiftiDatatype dt);

enum class ByteOrder { kLittle, kBig };

struct Volume {
  std::array<int, 3> dims{1, 1, 1};  // H, W, D
  std::array<double, 3> pixdim{1.0, 1.0, 1.0};  // mm along rows, columns, slices
  NiftiDatatype datatype = NiftiDatatype::kInt16;
  std::vector<double> voxels;  // raw stored values, row-major per slice
  double scl_slope = 0.0;
  double scl_inter = 0.0;
  ByteOrder endianness = ByteOrder::kLittle;

  std::size_t voxel_count() const;
  // Raw value with the header rescale applied when slope != 0.
  double value(std::size_t i) const {
    return scl_slope != 0.0 ? voxels[i] * scl_slope + scl_inter : voxels[i];
  }
  std::size_t index(int row, int col, int slice) const {
    return (static_cast<std::size_t>(slice) * dims[0] + row) * dims[1] + col;
  }
};

// Accepts plain or gzip-compressed single-file NIfTI-1 ("n+1"). Throws
// BadMagic, BadHeader, UnsupportedDatatype, TruncatedData.
Volume parse_nifti(std::span<const std::uint8_t> bytes);
// Header/image pair ("ni1"): voxel data read from `image` at vox_offset.
Volume parse_nifti_pair(std::span<const std::uint8_t> header, std::span<const std::uint8_t> image);
Volume read_nifti_file(const std::filesystem::path& path);

// Debug writer: single-file "n+1" in the requested byte order with the
// volume's datatype and rescale.
std::vector<std::uint8_t> write_nifti(const Volume& vol, ByteOrder order = ByteOrder::kLittle,
                                      bool gzip = false);

// ---- slices, labels, structures -------------------------------------------

inline constexpr double kDefaultWindowCenter = 40.0;
inline constexpr double kDefaultWindowWidth = 400.0;

// Axial slices with clamp((v - (c - w/2)) / w, 0, 1). Throws InvalidWindow.
std::vector<ImageSlice> slice_and_window(const Volume& vol, double window_center = kDefaultWindowCenter,
                                         double window_width = kDefaultWindowWidth,
                                         const std::string& case_id = {});

struct LabelSlice {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> labels;

  int at(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }
};

LabelSlice label_slice(const Volume& labels, int slice_index);

inline constexpr std::size_t kDefaultMinArea = 50;

// 8-connected components of {label == organ_id}, smaller than min_area
// dropped, ordered by first pixel in row-major order. InvalidParam when
// organ_id is outside 1..16.
std::vector<Mask> decompose_structures(const LabelSlice& labels, int organ_id,
                                       std::size_t min_area = kDefaultMinArea);

// All pixels of one organ on the slice as a single mask.
Mask organ_mask(const LabelSlice& labels, int organ_id);

// ---- phantoms --------------------------------------------------------------

struct PhantomBlob {
  double center_row = 0.0;
  double center_col = 0.0;
  double radius_row = 1.0;
  double radius_col = 1.0;
  double rotation = 0.0;  // radians
  double intensity = 1.0;
  int lobes = 1;  // lobes are split by 1-px background cuts across the major axis
  Structure structure = Structure::kNone;
};

struct PhantomSpec {
  int height = 64;
  int width = 64;
  std::vector<PhantomBlob> blobs;
  double background_intensity = 0.2;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

struct Phantom {
  ImageSlice image;
  std::vector<Mask> masks;  // one per blob, in blob order
};

// Hard-edged rendering plus Gaussian noise (clamped to [0,1]). Throws
// OverlapError when two blobs share a pixel, InvalidParam on bad intensities.
Phantom generate_phantom(const PhantomSpec& spec);

// Pixels covered by a blob, before lobe cuts.
Mask rasterize_blob(const PhantomBlob& blob, int height, int width);

// ---- corpora ---------------------------------------------------------------

struct StructureInstance {
  std::string case_id;
  int slice_index = 0;
  std::string key;  // unique within the case, e.g. "liver" or "liver#1"
  std::shared_ptr<const ImageSlice> image;
  Mask gt;
};

struct CaseSlice {
  std::string case_id;
  int slice_index = 0;
  std::shared_ptr<const ImageSlice> image;
  std::vector<Mask> structures;  // one mask per structure label present
};

// A loaded corpus: addressable slices plus their per-structure work units.
class Corpus {
 public:
  void add(CaseSlice slice);
  const std::vector<CaseSlice>& slices() const { return slices_; }
  const CaseSlice* find(const std::string& case_id, int slice_index) const;
  // Sorted by (case_id, slice_index, key).
  std::vector<StructureInstance> instances() const;

 private:
  std::vector<CaseSlice> slices_;
};

enum class PhantomCorpusKind { kMixed, kTwoLobe };

struct PhantomCorpusSpec {
  PhantomCorpusKind kind = PhantomCorpusKind::kMixed;
  int count = 24;
  int size = 96;
  std::uint64_t seed = 1;
  double noise_std = 0.02;
};

// kMixed: one to three ellipses per case with contrasts spread across
// [0.12, 0.6]. kTwoLobe: a single two-lobe blob per case.
Corpus make_phantom_corpus(const PhantomCorpusSpec& spec);

struct ManifestOptions {
  double window_center = kDefaultWindowCenter;
  double window_width = kDefaultWindowWidth;
  int slice_stride = 1;
  std::size_t min_area = kDefaultMinArea;
};

// {"cases":[{"id","image","labels"},...]}; relative paths resolve against
// the manifest directory. Throws CorpusError.
Corpus load_manifest(const std::filesystem::path& manifest, const ManifestOptions& options = {});

// {"phantom":{...}} or {"manifest":path,...}.
Corpus load_corpus(const nlohmann::json& config, const std::filesystem::path& base_dir = {});

// Writes <case>.png plus <case>.<structure>.json RLE sidecars per slice.
void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gazeseg
