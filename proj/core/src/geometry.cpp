#include "patchkit/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace patchkit {

bool BoundingBox::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) && x1 <= x2 &&
           y1 <= y2;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double iou_with_gradient(const BoundingBox& a, const BoundingBox& b, BoxGradient& ga, BoxGradient& gb) {
    ga.fill(0.0);
    gb.fill(0.0);
    const double left = std::max(a.x1, b.x1);
    const double right = std::min(a.x2, b.x2);
    const double top = std::max(a.y1, b.y1);
    const double bottom = std::min(a.y2, b.y2);
    const double iw = right - left;
    const double ih = bottom - top;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;

    const double aw = a.width(), ah = a.height();
    const double bw = b.width(), bh = b.height();
    const double inter = iw * ih;
    const double uni = aw * ah + bw * bh - inter;
    if (uni <= 0.0) return 0.0;

    // d(inter) with respect to each box's coordinates.
    BoxGradient di_a{}, di_b{};
    (a.x1 >= b.x1 ? di_a[0] : di_b[0]) = -ih;
    (a.x2 <= b.x2 ? di_a[2] : di_b[2]) = ih;
    (a.y1 >= b.y1 ? di_a[1] : di_b[1]) = -iw;
    (a.y2 <= b.y2 ? di_a[3] : di_b[3]) = iw;

    const BoxGradient darea_a{-ah, -aw, ah, aw};
    const BoxGradient darea_b{-bh, -bw, bh, bw};

    const double inv_u2 = 1.0 / (uni * uni);
    for (std::size_t k = 0; k < 4; ++k) {
        const double du_a = darea_a[k] - di_a[k];
        const double du_b = darea_b[k] - di_b[k];
        ga[k] = (di_a[k] * uni - inter * du_a) * inv_u2;
        gb[k] = (di_b[k] * uni - inter * du_b) * inv_u2;
    }
    return inter / uni;
}

std::vector<double> pairwise_iou(std::span<const BoundingBox> boxes) {
    const std::size_t n = boxes.size();
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        m[i * n + i] = iou(boxes[i], boxes[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = iou(boxes[i], boxes[j]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    return m;
}

BoundingBox clip_box(const BoundingBox& b, double width, double height) {
    BoundingBox out{std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height), std::clamp(b.x2, 0.0, width),
                    std::clamp(b.y2, 0.0, height)};
    out.x2 = std::max(out.x2, out.x1);
    out.y2 = std::max(out.y2, out.y1);
    return out;
}

}  // namespace patchkit
