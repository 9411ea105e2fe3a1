#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gazeseg/codec.hpp"
#include "gazeseg/data_io.hpp"
#include "gazeseg/error.hpp"

namespace gazeseg {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kSingleFileOffset = 352;

// Header field offsets (NIfTI-1).
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffMagic = 344;

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t off) const {
    static_assert(sizeof(T) <= 8);
    if (off + sizeof(T) > bytes_.size()) fail(ErrorCode::kTruncatedData, "read past end of buffer");
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), bytes_.data() + off, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class Writer {
 public:
  Writer(std::vector<std::uint8_t>& out, bool swap) : out_(out), swap_(swap) {}

  template <typename T>
  void put(std::size_t off, T v) {
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), &v, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    if (off + sizeof(T) > out_.size()) out_.resize(off + sizeof(T));
    std::memcpy(out_.data() + off, raw.data(), sizeof(T));
  }

 private:
  std::vector<std::uint8_t>& out_;
  bool swap_;
};

constexpr bool kHostLittle = std::endian::native == std::endian::little;

bool needs_swap(ByteOrder order) { return (order == ByteOrder::kLittle) != kHostLittle; }

std::size_t bytes_per_voxel(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::kUint8: return 1;
    case NiftiDatatype::kInt16: return 2;
    case NiftiDatatype::kInt32: return 4;
    case NiftiDatatype::kFloat32: return 4;
    case NiftiDatatype::kFloat64: return 8;
  }
  return 0;
}

std::optional<NiftiDatatype> to_datatype(std::int16_t code) {
  switch (code) {
    case 2: return NiftiDatatype::kUint8;
    case 4: return NiftiDatatype::kInt16;
    case 8: return NiftiDatatype::kInt32;
    case 16: return NiftiDatatype::kFloat32;
    case 64: return NiftiDatatype::kFloat64;
    default: return std::nullopt;
  }
}

struct Header {
  Volume vol;  // everything except voxels
  std::size_t vox_offset = 0;
  bool single_file = true;
};

Header parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) fail(ErrorCode::kTruncatedData, "input shorter than a NIfTI-1 header");
  ByteOrder order;
  if (Reader(bytes, needs_swap(ByteOrder::kLittle)).get<std::int32_t>(0) == 348) {
    order = ByteOrder::kLittle;
  } else if (Reader(bytes, needs_swap(ByteOrder::kBig)).get<std::int32_t>(0) == 348) {
    order = ByteOrder::kBig;
  } else {
    fail(ErrorCode::kBadHeader, "sizeof_hdr is not 348 in either byte order");
  }
  const Reader rd(bytes, needs_swap(order));

  const char* magic = reinterpret_cast<const char*>(bytes.data() + kOffMagic);
  Header h;
  if (std::memcmp(magic, "n+1\0", 4) == 0) {
    h.single_file = true;
  } else if (std::memcmp(magic, "ni1\0", 4) == 0) {
    h.single_file = false;
  } else {
    fail(ErrorCode::kBadMagic, "magic is neither \"n+1\" nor \"ni1\"");
  }

  std::array<std::int16_t, 8> dim{};
  for (std::size_t i = 0; i < 8; ++i) dim[i] = rd.get<std::int16_t>(kOffDim + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) fail(ErrorCode::kBadHeader, "dim[0] outside 1..7");
  for (int i = 1; i <= dim[0]; ++i) {
    if (dim[i] < 1) fail(ErrorCode::kBadHeader, "non-positive dimension");
  }
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] != 1) fail(ErrorCode::kBadHeader, "only 2D/3D volumes are supported");
  }
  const int nx = dim[1];
  const int ny = dim[0] >= 2 ? dim[2] : 1;
  const int nz = dim[0] >= 3 ? dim[3] : 1;

  const auto dt = to_datatype(rd.get<std::int16_t>(kOffDatatype));
  if (!dt) fail(ErrorCode::kUnsupportedDatatype, "datatype code " + std::to_string(rd.get<std::int16_t>(kOffDatatype)));
  const auto bitpix = rd.get<std::int16_t>(kOffBitpix);
  if (bitpix != 0 && static_cast<std::size_t>(bitpix) != bytes_per_voxel(*dt) * 8) {
    fail(ErrorCode::kBadHeader, "bitpix does not match datatype");
  }

  std::array<float, 8> pixdim{};
  for (std::size_t i = 0; i < 8; ++i) pixdim[i] = rd.get<float>(kOffPixdim + 4 * i);
  const float vox_offset = rd.get<float>(kOffVoxOffset);
  if (!(vox_offset >= 0.0f) || std::floor(vox_offset) != vox_offset) {
    fail(ErrorCode::kBadHeader, "vox_offset must be a non-negative integer");
  }
  if (h.single_file && vox_offset < static_cast<float>(kHeaderSize)) {
    fail(ErrorCode::kBadHeader, "vox_offset inside the header");
  }

  h.vol.dims = {ny, nx, nz};
  h.vol.pixdim = {pixdim[2], pixdim[1], pixdim[3]};
  h.vol.datatype = *dt;
  h.vol.scl_slope = rd.get<float>(kOffSclSlope);
  h.vol.scl_inter = rd.get<float>(kOffSclInter);
  if (!std::isfinite(h.vol.scl_slope) || !std::isfinite(h.vol.scl_inter)) {
    h.vol.scl_slope = 0.0;
    h.vol.scl_inter = 0.0;
  }
  h.vol.endianness = order;
  h.vox_offset = static_cast<std::size_t>(vox_offset);
  return h;
}

void read_voxels(Volume& vol, std::span<const std::uint8_t> data, std::size_t offset) {
  const std::size_t n = vol.voxel_count();
  const std::size_t bpv = bytes_per_voxel(vol.datatype);
  if (offset > data.size() || (data.size() - offset) / bpv < n) {
    fail(ErrorCode::kTruncatedData, "voxel payload shorter than dims imply");
  }
  const Reader rd(data, needs_swap(vol.endianness));
  vol.voxels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = offset + i * bpv;
    switch (vol.datatype) {
      case NiftiDatatype::kUint8: vol.voxels[i] = data[off]; break;
      case NiftiDatatype::kInt16: vol.voxels[i] = rd.get<std::int16_t>(off); break;
      case NiftiDatatype::kInt32: vol.voxels[i] = rd.get<std::int32_t>(off); break;
      case NiftiDatatype::kFloat32: vol.voxels[i] = rd.get<float>(off); break;
      case NiftiDatatype::kFloat64: vol.voxels[i] = rd.get<double>(off); break;
    }
  }
}

}  // namespace

std::string_view datatype_name(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::kUint8: return "uint8";
    case NiftiDatatype::kInt16: return "int16";
    case NiftiDatatype::kInt32: return "int32";
    case NiftiDatatype::kFloat32: return "float32";
    case NiftiDatatype::kFloat64: return "float64";
  }
  return "unknown";
}

std::size_t Volume::voxel_count() const {
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
}

Volume parse_nifti(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> inflated;
  if (is_gzip(bytes)) {
    inflated = gzip_decompress(bytes);
    bytes = inflated;
  }
  Header h = parse_header(bytes);
  if (bytes.size() < kSingleFileOffset) fail(ErrorCode::kTruncatedData, "input shorter than 352 bytes");
  if (!h.single_file) {
    fail(ErrorCode::kBadMagic, "\"ni1\" header needs a separate image file (use parse_nifti_pair)");
  }
  read_voxels(h.vol, bytes, h.vox_offset);
  return std::move(h.vol);
}

Volume parse_nifti_pair(std::span<const std::uint8_t> header, std::span<const std::uint8_t> image) {
  std::vector<std::uint8_t> hdr_inflated, img_inflated;
  if (is_gzip(header)) {
    hdr_inflated = gzip_decompress(header);
    header = hdr_inflated;
  }
  if (is_gzip(image)) {
    img_inflated = gzip_decompress(image);
    image = img_inflated;
  }
  Header h = parse_header(header);
  if (h.single_file) fail(ErrorCode::kBadMagic, "\"n+1\" header used as a header/image pair");
  read_voxels(h.vol, image, h.vox_offset);
  return std::move(h.vol);
}

Volume read_nifti_file(const std::filesystem::path& path) { return parse_nifti(read_file(path)); }

std::vector<std::uint8_t> write_nifti(const Volume& vol, ByteOrder order, bool gzip) {
  const std::size_t bpv = bytes_per_voxel(vol.datatype);
  std::vector<std::uint8_t> out(kSingleFileOffset + vol.voxel_count() * bpv, 0);
  Writer wr(out, needs_swap(order));
  wr.put<std::int32_t>(0, 348);
  const std::array<std::int16_t, 8> dim = {3, static_cast<std::int16_t>(vol.dims[1]),
                                           static_cast<std::int16_t>(vol.dims[0]),
                                           static_cast<std::int16_t>(vol.dims[2]), 1, 1, 1, 1};
  for (std::size_t i = 0; i < 8; ++i) wr.put<std::int16_t>(kOffDim + 2 * i, dim[i]);
  wr.put<std::int16_t>(kOffDatatype, static_cast<std::int16_t>(vol.datatype));
  wr.put<std::int16_t>(kOffBitpix, static_cast<std::int16_t>(bpv * 8));
  const std::array<float, 8> pixdim = {1.0f, static_cast<float>(vol.pixdim[1]),
                                       static_cast<float>(vol.pixdim[0]),
                                       static_cast<float>(vol.pixdim[2]), 0, 0, 0, 0};
  for (std::size_t i = 0; i < 8; ++i) wr.put<float>(kOffPixdim + 4 * i, pixdim[i]);
  wr.put<float>(kOffVoxOffset, static_cast<float>(kSingleFileOffset));
  wr.put<float>(kOffSclSlope, static_cast<float>(vol.scl_slope));
  wr.put<float>(kOffSclInter, static_cast<float>(vol.scl_inter));
  std::memcpy(out.data() + kOffMagic, "n+1\0", 4);
  for (std::size_t i = 0; i < vol.voxel_count(); ++i) {
    const std::size_t off = kSingleFileOffset + i * bpv;
    const double v = vol.voxels[i];
    switch (vol.datatype) {
      case NiftiDatatype::kUint8: out[off] = static_cast<std::uint8_t>(v); break;
      case NiftiDatatype::kInt16: wr.put<std::int16_t>(off, static_cast<std::int16_t>(v)); break;
      case NiftiDatatype::kInt32: wr.put<std::int32_t>(off, static_cast<std::int32_t>(v)); break;
      case NiftiDatatype::kFloat32: wr.put<float>(off, static_cast<float>(v)); break;
      case NiftiDatatype::kFloat64: wr.put<double>(off, v); break;
    }
  }
  return gzip ? gzip_compress(out) : out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace gazeseg
