#include "patchkit/image.hpp"

#include <algorithm>
#include <cmath>

#include "patchkit/error.hpp"
#include "patchkit/geometry.hpp"

namespace patchkit {

RgbImage::RgbImage(int height, int width, double fill) : height_(height), width_(width) {
    if (height < 0 || width < 0) throw InvalidArgument("image dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kChannels, fill);
}

bool RgbImage::in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

void Patch::validate() const {
    if (height() < 1 || width() < 1) throw InvalidArgument("patch must be at least 1x1");
    if (!in_unit_range()) throw InvalidArgument("patch values must lie in [0, 1]");
}

RgbImage resize_bilinear(const RgbImage& src, int height, int width) {
    if (height < 1 || width < 1) throw InvalidArgument("resize target must be at least 1x1");
    if (src.empty()) throw InvalidArgument("cannot resize an empty image");
    if (height == src.height() && width == src.width()) return src;

    RgbImage out(height, width);
    const double sy = static_cast<double>(src.height()) / height;
    const double sx = static_cast<double>(src.width()) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < RgbImage::kChannels; ++c) {
                const double top = (1.0 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
                const double bot = (1.0 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
                out.at(y, x, c) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

BoundingBox scale_box(const BoundingBox& b, int src_h, int src_w, int dst_h, int dst_w) {
    const double sx = static_cast<double>(dst_w) / src_w;
    const double sy = static_cast<double>(dst_h) / src_h;
    return {b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy};
}

}  // namespace patchkit
