#include "gazeseg/rle.hpp"

#include "gazeseg/error.hpp"

namespace gazeseg {

std::vector<std::uint64_t> rle_encode(const Mask& mask) {
  std::vector<std::uint64_t> runs;
  std::uint8_t current = 0;
  std::uint64_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t b = mask.at(i) ? 1 : 0;
    if (b != current) {
      runs.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

Mask rle_decode(int height, int width, const std::vector<std::uint64_t>& runs,
                Structure structure) {
  if (height < 0 || width < 0) fail(ErrorCode::kProtocolError, "negative RLE size");
  const std::uint64_t total = static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  std::uint64_t sum = 0;
  for (auto r : runs) {
    if (r > total || sum + r > total) fail(ErrorCode::kProtocolError, "RLE runs exceed H*W");
    sum += r;
  }
  if (sum != total) fail(ErrorCode::kProtocolError, "RLE runs do not sum to H*W");
  Mask mask(height, width, structure);
  std::size_t pos = 0;
  bool fg = false;
  for (auto r : runs) {
    if (fg) {
      for (std::uint64_t k = 0; k < r; ++k) mask.set(pos + k);
    }
    pos += r;
    fg = !fg;
  }
  return mask;
}

nlohmann::json rle_to_json(const Mask& mask) {
  return {{"size", {mask.height(), mask.width()}}, {"rle", rle_encode(mask)}};
}

Mask rle_from_json(const nlohmann::json& j, Structure structure) {
  try {
    const auto& size = j.at("size");
    if (!size.is_array() || size.size() != 2) fail(ErrorCode::kProtocolError, "RLE size must be [H,W]");
    const auto& rle = j.at("rle");
    if (!rle.is_array()) fail(ErrorCode::kProtocolError, "RLE runs must be an array");
    std::vector<std::uint64_t> runs;
    runs.reserve(rle.size());
    for (const auto& r : rle) {
      if (!r.is_number_integer() || r.get<std::int64_t>() < 0) {
        fail(ErrorCode::kProtocolError, "RLE runs must be non-negative integers");
      }
      runs.push_back(r.get<std::uint64_t>());
    }
    return rle_decode(size[0].get<int>(), size[1].get<int>(), runs, structure);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kProtocolError, std::string("malformed RLE: ") + e.what());
  }
}

}  // namespace gazeseg
