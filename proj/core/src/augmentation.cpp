#include "patchkit/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchkit/error.hpp"

namespace patchkit {

void AugmentConfig::validate() const {
    if (!(brightness_delta >= 0.0 && brightness_delta < 1.0))
        throw InvalidArgument("augment.brightness_delta must be in [0, 1)");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw InvalidArgument("augment.noise_std must be >= 0");
    if (!(rotation_range >= 0.0) || !std::isfinite(rotation_range))
        throw InvalidArgument("augment.rotation_range must be >= 0");
    if (!(scale_min > 0.0 && scale_min <= scale_max) || !std::isfinite(scale_max))
        throw InvalidArgument("augment.scale_range must satisfy 0 < min <= max");
    if (!(perspective_magnitude >= 0.0 && perspective_magnitude < 0.5))
        throw InvalidArgument("augment.perspective_magnitude must be in [0, 0.5)");
    if (draws_per_image < 1) throw InvalidArgument("augment.draws_per_image must be >= 1");
}

Rng make_substream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t item) {
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(epoch), hi(epoch), lo(item), hi(item)};
    return Rng(seq);
}

namespace {

double draw_symmetric(Rng& rng, double range) {
    if (range <= 0.0) return 0.0;
    return std::uniform_real_distribution<double>(-range, range)(rng);
}

}  // namespace

AugmentDraw sample_augmentation(const AugmentConfig& cfg, Rng& rng, int height, int width) {
    AugmentDraw d;
    d.alpha = cfg.brightness_delta > 0.0
                  ? std::uniform_real_distribution<double>(1.0 - cfg.brightness_delta, 1.0 + cfg.brightness_delta)(rng)
                  : 1.0;

    const double angle = draw_symmetric(rng, cfg.rotation_range);
    const double scale =
        cfg.scale_max > cfg.scale_min ? std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng)
                                      : cfg.scale_min;
    const double px = draw_symmetric(rng, cfg.perspective_magnitude);
    const double py = draw_symmetric(rng, cfg.perspective_magnitude);

    if (angle != 0.0 || scale != 1.0 || px != 0.0 || py != 0.0) {
        const double cx = 0.5 * width;
        const double cy = 0.5 * height;
        d.transform = Homography::translation(cx, cy) * Homography::rotation(angle) *
                      Homography::scaling(scale, scale) * Homography::perspective(px / width, py / height) *
                      Homography::translation(-cx, -cy);
    }

    if (cfg.noise_std > 0.0) {
        std::normal_distribution<double> gauss(0.0, cfg.noise_std);
        d.noise.resize(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * RgbImage::kChannels);
        for (double& v : d.noise) v = gauss(rng);
    }
    return d;
}

SceneImage augment(const SceneImage& image, const AugmentDraw& draw, AugmentTrace* trace) {
    const int h = image.height();
    const int w = image.width();
    const std::size_t values = image.size();
    if (!draw.noise.empty() && draw.noise.size() != values)
        throw InvalidArgument("augmentation noise field does not match the image size");

    const bool identity = draw.transform.is_identity();
    SceneImage warped = identity ? image : SceneImage(h, w);
    std::vector<std::uint32_t> taps;
    std::vector<double> weights;

    if (!identity) {
        const Homography inv = draw.transform.inverse();
        const std::size_t pixels = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
        taps.resize(pixels * 4);
        weights.resize(pixels * 4);
        const auto src = image.values();
        auto dst = warped.values();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
                std::array<std::uint32_t, 4> t{0, 0, 0, 0};
                std::array<double, 4> wt{1.0, 0.0, 0.0, 0.0};
                if (const auto s = inv.apply({x + 0.5, y + 0.5})) {
                    const double u = std::clamp(s->x - 0.5, -1.0, static_cast<double>(w));
                    const double v = std::clamp(s->y - 0.5, -1.0, static_cast<double>(h));
                    const double fu = std::floor(u);
                    const double fv = std::floor(v);
                    const double au = u - fu;
                    const double av = v - fv;
                    const int u0 = std::clamp(static_cast<int>(fu), 0, w - 1);
                    const int u1 = std::clamp(static_cast<int>(fu) + 1, 0, w - 1);
                    const int v0 = std::clamp(static_cast<int>(fv), 0, h - 1);
                    const int v1 = std::clamp(static_cast<int>(fv) + 1, 0, h - 1);
                    t = {static_cast<std::uint32_t>(v0 * w + u0), static_cast<std::uint32_t>(v0 * w + u1),
                         static_cast<std::uint32_t>(v1 * w + u0), static_cast<std::uint32_t>(v1 * w + u1)};
                    wt = {(1.0 - au) * (1.0 - av), au * (1.0 - av), (1.0 - au) * av, au * av};
                }
                for (std::size_t c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < 4; ++k) acc += wt[k] * src[t[k] * 3 + c];
                    dst[p * 3 + c] = acc;
                }
                std::copy(t.begin(), t.end(), taps.begin() + static_cast<std::ptrdiff_t>(p * 4));
                std::copy(wt.begin(), wt.end(), weights.begin() + static_cast<std::ptrdiff_t>(p * 4));
            }
        }
    }

    SceneImage out(h, w);
    std::vector<std::uint8_t> pass(trace ? values : 0);
    const auto in = warped.values();
    auto o = out.values();
    for (std::size_t i = 0; i < values; ++i) {
        double v = draw.alpha * in[i];
        if (!draw.noise.empty()) v += draw.noise[i];
        if (trace) pass[i] = (v >= 0.0 && v <= 1.0) ? 1 : 0;
        o[i] = std::clamp(v, 0.0, 1.0);
    }

    if (trace) {
        trace->height = h;
        trace->width = w;
        trace->alpha = draw.alpha;
        trace->identity_warp = identity;
        trace->taps = std::move(taps);
        trace->weights = std::move(weights);
        trace->pass = std::move(pass);
    }
    return out;
}

RgbImage augment_backward(const AugmentTrace& trace, const RgbImage& output_grad) {
    RgbImage grad(trace.height, trace.width);
    const auto g = output_grad.values();
    auto out = grad.values();
    if (trace.identity_warp) {
        for (std::size_t i = 0; i < g.size(); ++i)
            if (trace.pass[i]) out[i] = trace.alpha * g[i];
        return grad;
    }
    const std::size_t pixels = static_cast<std::size_t>(trace.height) * static_cast<std::size_t>(trace.width);
    for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t i = p * 3 + c;
            if (!trace.pass[i] || g[i] == 0.0) continue;
            const double up = trace.alpha * g[i];
            for (std::size_t k = 0; k < 4; ++k) out[trace.taps[p * 4 + k] * 3 + c] += trace.weights[p * 4 + k] * up;
        }
    }
    return grad;
}

BoundingBox transform_box(const BoundingBox& box, const Homography& transform, int height, int width) {
    if (transform.is_identity()) return clip_box(box, width, height);
    double minx = std::numeric_limits<double>::infinity(), miny = minx;
    double maxx = -minx, maxy = -minx;
    for (Point2 c : {Point2{box.x1, box.y1}, Point2{box.x2, box.y1}, Point2{box.x1, box.y2}, Point2{box.x2, box.y2}}) {
        const auto p = transform.apply(c);
        if (!p) return clip_box(box, width, height);
        minx = std::min(minx, p->x);
        maxx = std::max(maxx, p->x);
        miny = std::min(miny, p->y);
        maxy = std::max(maxy, p->y);
    }
    return clip_box({minx, miny, maxx, maxy}, width, height);
}

}  // namespace patchkit
