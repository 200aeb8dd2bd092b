#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "patchkit/image.hpp"

namespace patchkit {

// Decodes PNG, JPEG or binary PPM to RGB in [0, 1] (8-bit / 255).
RgbImage read_image(const std::filesystem::path& path);

struct PngText {
    std::string key;
    std::string value;
};

// 8-bit RGB PNG; values are clamped and rounded half-up from v * 255.
void write_png(const std::filesystem::path& path, const RgbImage& image,
               const std::vector<PngText>& text = {});

std::uint8_t quantize_unit(double v);

bool is_supported_image(const std::filesystem::path& path);

}  // namespace patchkit
