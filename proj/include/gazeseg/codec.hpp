#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gazeseg/core.hpp"

namespace gazeseg {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ProtocolError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct GrayImage8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> png_encode_gray8(const GrayImage8& img);
// Any PNG is accepted and converted to 8-bit grayscale. ProtocolError on failure.
GrayImage8 png_decode_gray8(std::span<const std::uint8_t> png);

// Intensities in [0,1] quantized to round(v*255).
GrayImage8 to_gray8(int height, int width, std::span<const double> values);
ImageSlice image_from_gray8(const GrayImage8& img, int slice_index = 0, std::string case_id = {});

bool is_gzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes);
// Throws TruncatedData on a corrupt or incomplete stream.
std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> bytes);

}  // namespace gazeseg
