#pragma once

#include <array>
#include <optional>
#include <vector>

#include "patchkit/image.hpp"

namespace patchkit::cli {

using Color = std::array<double, 3>;

// Distinct series colors, cycled.
Color palette(std::size_t i);

// Lines over a shared x axis (sample index), y auto-scaled to all series.
RgbImage line_plot(const std::vector<std::vector<double>>& series, int width = 640, int height = 400);

// One bar per value on a fixed [0, y_max] axis; missing values leave a gap
// marked by a short gray stub.
RgbImage bar_plot(const std::vector<std::optional<double>>& values, double y_max, int width = 640,
                  int height = 400);

// Cell colors run from blue at 0 to red at `v_max`; missing cells are gray.
RgbImage heatmap(const std::vector<std::vector<std::optional<double>>>& cells, double v_max, int cell_px = 48);

}  // namespace patchkit::cli
