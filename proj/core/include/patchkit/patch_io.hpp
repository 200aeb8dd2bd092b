#pragma once

#include <filesystem>
#include <optional>

#include "patchkit/image.hpp"

namespace patchkit {

// Sidecar layout: "TPCH", u32 height, u32 width, u32 reserved, then
// height*width*3 little-endian float32 values in row-major (H, W, 3) order.
void save_patch(const std::filesystem::path& path, const Patch& patch);

// Throws IoError on bad magic, truncation or a size that disagrees with the
// header; also when `expected` dimensions (height, width) are given and differ.
Patch load_patch(const std::filesystem::path& path,
                 std::optional<std::pair<int, int>> expected = std::nullopt);

// 8-bit preview, round-half-up quantization.
void save_patch_png(const std::filesystem::path& path, const Patch& patch);

}  // namespace patchkit
