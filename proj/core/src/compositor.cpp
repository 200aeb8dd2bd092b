#include "patchkit/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchkit/error.hpp"

namespace patchkit {

void PlacementSpec::validate() const {
    if (!(scale_fraction > 0.0 && scale_fraction <= 1.0))
        throw InvalidArgument("placement.scale_fraction must be in (0, 1]");
    if (!(vertical_anchor >= 0.0 && vertical_anchor <= 1.0))
        throw InvalidArgument("placement.vertical_anchor must be in [0, 1]");
    if (!std::isfinite(rotation)) throw InvalidArgument("placement.rotation must be finite");
    if (!(std::abs(perspective_magnitude) < 1.0))
        throw InvalidArgument("placement.perspective_magnitude must be in (-1, 1)");
}

Homography compute_placement(const BoundingBox& gt_box, const PlacementSpec& spec, const PlacementJitter& jitter,
                             double aspect) {
    if (!gt_box.valid() || gt_box.area() <= 0.0)
        throw InvalidArgument("invalid annotation: person box has zero area");
    const double bw = gt_box.width();
    const double bh = gt_box.height();
    const double pw = spec.scale_fraction * bw * jitter.scale;
    const double ph = pw * aspect;
    const double cx = gt_box.center_x() + jitter.shift_x * bw;
    const double cy = gt_box.y1 + spec.vertical_anchor * bh + jitter.shift_y * bh;

    return Homography::translation(cx, cy) * Homography::rotation(spec.rotation + jitter.rotation) *
           Homography::scaling(pw, ph) * Homography::perspective(spec.perspective_magnitude, 0.0) *
           Homography::translation(-0.5, -0.5);
}

namespace {

struct PixelRange {
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // half-open
    bool empty() const { return x0 >= x1 || y0 >= y1; }
};

PixelRange footprint(const Homography& t, int height, int width) {
    double minx = std::numeric_limits<double>::infinity(), miny = minx;
    double maxx = -minx, maxy = -minx;
    for (Point2 corner : {Point2{0, 0}, Point2{1, 0}, Point2{0, 1}, Point2{1, 1}}) {
        const auto p = t.apply(corner);
        if (!p) return {0, width, 0, height};
        minx = std::min(minx, p->x);
        maxx = std::max(maxx, p->x);
        miny = std::min(miny, p->y);
        maxy = std::max(maxy, p->y);
    }
    PixelRange r;
    r.x0 = static_cast<int>(std::clamp(std::floor(minx), 0.0, static_cast<double>(width)));
    r.x1 = static_cast<int>(std::clamp(std::ceil(maxx) + 1.0, 0.0, static_cast<double>(width)));
    r.y0 = static_cast<int>(std::clamp(std::floor(miny), 0.0, static_cast<double>(height)));
    r.y1 = static_cast<int>(std::clamp(std::ceil(maxy) + 1.0, 0.0, static_cast<double>(height)));
    return r;
}

// Writes the warped patch into `image`; returns the number of covered pixels.
std::size_t composite_into(RgbImage& image, const Patch& patch, const Homography& transform,
                           std::vector<PatchSample>& samples) {
    const PixelRange r = footprint(transform, image.height(), image.width());
    if (r.empty()) return 0;
    const Homography inv = transform.inverse();
    const int ph = patch.height();
    const int pw = patch.width();
    std::size_t covered = 0;

    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            const auto st = inv.apply({x + 0.5, y + 0.5});
            if (!st) continue;
            if (!(st->x >= 0.0 && st->x < 1.0 && st->y >= 0.0 && st->y < 1.0)) continue;

            const double u = st->x * pw - 0.5;
            const double v = st->y * ph - 0.5;
            const double fu = std::floor(u);
            const double fv = std::floor(v);
            const double wu = u - fu;
            const double wv = v - fv;
            const int u0 = std::clamp(static_cast<int>(fu), 0, pw - 1);
            const int u1 = std::clamp(static_cast<int>(fu) + 1, 0, pw - 1);
            const int v0 = std::clamp(static_cast<int>(fv), 0, ph - 1);
            const int v1 = std::clamp(static_cast<int>(fv) + 1, 0, ph - 1);

            PatchSample s;
            s.pixel = static_cast<std::uint32_t>(y * image.width() + x);
            s.taps = {static_cast<std::uint32_t>(v0 * pw + u0), static_cast<std::uint32_t>(v0 * pw + u1),
                      static_cast<std::uint32_t>(v1 * pw + u0), static_cast<std::uint32_t>(v1 * pw + u1)};
            s.weights = {(1.0 - wu) * (1.0 - wv), wu * (1.0 - wv), (1.0 - wu) * wv, wu * wv};

            const auto pv = patch.values();
            for (int c = 0; c < RgbImage::kChannels; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 4; ++k) acc += s.weights[k] * pv[s.taps[k] * 3 + static_cast<std::size_t>(c)];
                image.at(y, x, c) = std::clamp(acc, 0.0, 1.0);
            }
            samples.push_back(s);
            ++covered;
        }
    }
    return covered;
}

}  // namespace

Composite apply_patch(const SceneImage& image, const Patch& patch, const Homography& transform) {
    Composite out{image, {}, 0};
    if (composite_into(out.image, patch, transform, out.samples) == 0) out.placements_outside = 1;
    return out;
}

Composite apply_to_all_persons(const SceneImage& image, const Patch& patch, std::span<const BoundingBox> gt_boxes,
                               const PlacementSpec& spec, std::span<const PlacementJitter> jitter) {
    Composite out{image, {}, 0};
    if (gt_boxes.empty()) return out;

    const double aspect = static_cast<double>(patch.height()) / patch.width();
    std::vector<PatchSample> all;
    for (std::size_t i = 0; i < gt_boxes.size(); ++i) {
        if (!gt_boxes[i].valid() || gt_boxes[i].area() <= 0.0) {
            ++out.placements_outside;
            continue;
        }
        const PlacementJitter j = i < jitter.size() ? jitter[i] : PlacementJitter{};
        const Homography t = compute_placement(gt_boxes[i], spec, j, aspect);
        if (composite_into(out.image, patch, t, all) == 0) ++out.placements_outside;
    }

    // Keep only the last writer of each pixel.
    std::vector<std::int64_t> owner(static_cast<std::size_t>(image.height()) * image.width(), -1);
    for (std::size_t i = 0; i < all.size(); ++i) owner[all[i].pixel] = static_cast<std::int64_t>(i);
    out.samples.reserve(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (owner[all[i].pixel] == static_cast<std::int64_t>(i)) out.samples.push_back(all[i]);
    }
    return out;
}

void composite_backward(const Composite& composite, const RgbImage& image_grad, RgbImage& patch_grad) {
    const auto g = image_grad.values();
    auto pg = patch_grad.values();
    for (const PatchSample& s : composite.samples) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double up = g[static_cast<std::size_t>(s.pixel) * 3 + c];
            if (up == 0.0) continue;
            for (std::size_t k = 0; k < 4; ++k) pg[s.taps[k] * 3 + c] += s.weights[k] * up;
        }
    }
}

}  // namespace patchkit
