#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeseg/core.hpp"

namespace gazeseg {

// Alternating run lengths over the row-major flattened mask, starting with a
// background run (which may be zero). Runs sum to H*W.
std::vector<std::uint64_t> rle_encode(const Mask& mask);

// Throws ProtocolError when the runs do not sum to H*W.
Mask rle_decode(int height, int width, const std::vector<std::uint64_t>& runs,
                Structure structure = Structure::kNone);

// {"size":[H,W],"rle":[...]}
nlohmann::json rle_to_json(const Mask& mask);
Mask rle_from_json(const nlohmann::json& j, Structure structure = Structure::kNone);

}  // namespace gazeseg
