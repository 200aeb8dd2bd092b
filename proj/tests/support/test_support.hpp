#pragma once

// Shared generators and reference implementations for the test suites. The
// reference code is written independently of the library: plain loops, no
// shared helpers, so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "patchkit/geometry.hpp"
#include "patchkit/image.hpp"

namespace patchkit::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    BoundingBox box(double extent, double min_size = 1.0, double max_size = 0.0) {
        if (max_size <= 0.0) max_size = extent / 2;
        const double w = uniform(min_size, max_size);
        const double h = uniform(min_size, max_size);
        const double x = uniform(0.0, extent - w);
        const double y = uniform(0.0, extent - h);
        return {x, y, x + w, y + h};
    }

    BoundingBox int_box(int extent, int max_size) {
        const int w = integer(1, max_size);
        const int h = integer(1, max_size);
        const int x = integer(0, extent - w);
        const int y = integer(0, extent - h);
        return {double(x), double(y), double(x + w), double(y + h)};
    }

    // Candidates clustered around a few centers so overlaps are common.
    std::vector<Detection> detections(int n, double extent = 100.0, double person_share = 0.8) {
        std::vector<Detection> out;
        std::vector<BoundingBox> anchors;
        for (int i = 0; i < 3; ++i) anchors.push_back(box(extent, 10.0, 40.0));
        for (int i = 0; i < n; ++i) {
            BoundingBox b;
            if (coin(0.6)) {
                const auto& a = anchors[static_cast<std::size_t>(integer(0, 2))];
                const double j = 0.15 * a.width();
                b = {a.x1 + uniform(-j, j), a.y1 + uniform(-j, j), a.x2 + uniform(-j, j), a.y2 + uniform(-j, j)};
            } else {
                b = box(extent, 5.0, 40.0);
            }
            out.push_back({b, coin(person_share) ? kPersonLabel : "car", uniform(0.0, 1.0)});
        }
        return out;
    }

    RgbImage image(int h, int w, double lo = 0.0, double hi = 1.0) {
        RgbImage img(h, w);
        for (double& v : img.values()) v = uniform(lo, hi);
        return img;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Overlap of two intervals, by cases rather than min/max.
inline double ref_overlap_1d(double a0, double a1, double b0, double b1) {
    if (a1 <= b0 || b1 <= a0) return 0.0;
    double lo = a0 > b0 ? a0 : b0;
    double hi = a1 < b1 ? a1 : b1;
    return hi - lo;
}

inline double ref_iou(const BoundingBox& a, const BoundingBox& b) {
    const double aw = a.x2 > a.x1 ? a.x2 - a.x1 : 0.0, ah = a.y2 > a.y1 ? a.y2 - a.y1 : 0.0;
    const double bw = b.x2 > b.x1 ? b.x2 - b.x1 : 0.0, bh = b.y2 > b.y1 ? b.y2 - b.y1 : 0.0;
    const double inter = ref_overlap_1d(a.x1, a.x2, b.x1, b.x2) * ref_overlap_1d(a.y1, a.y2, b.y1, b.y2);
    const double uni = aw * ah + bw * bh - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Counts unit cells of an integer grid covered by each box.
inline double raster_iou(const BoundingBox& a, const BoundingBox& b) {
    const int x0 = static_cast<int>(std::floor(std::min(a.x1, b.x1)));
    const int x1 = static_cast<int>(std::ceil(std::max(a.x2, b.x2)));
    const int y0 = static_cast<int>(std::floor(std::min(a.y1, b.y1)));
    const int y1 = static_cast<int>(std::ceil(std::max(a.y2, b.y2)));
    long in_a = 0, in_b = 0, both = 0;
    for (int y = y0; y < y1; ++y) {
        const double cy = y + 0.5;
        const bool ya = cy > a.y1 && cy < a.y2;
        const bool yb = cy > b.y1 && cy < b.y2;
        if (!ya && !yb) continue;
        for (int x = x0; x < x1; ++x) {
            const double cx = x + 0.5;
            const bool ia = ya && cx > a.x1 && cx < a.x2;
            const bool ib = yb && cx > b.x1 && cx < b.x2;
            in_a += ia;
            in_b += ib;
            both += ia && ib;
        }
    }
    const long uni = in_a + in_b - both;
    return uni > 0 ? static_cast<double>(both) / static_cast<double>(uni) : 0.0;
}

inline double ref_softplus(double u) { return u > 0 ? u + std::log(1.0 + std::exp(-u)) : std::log(1.0 + std::exp(u)); }

inline bool ref_in_s(const Detection& d, double tau) { return d.label == "person" && d.confidence > tau; }

inline double ref_det_loss(const std::vector<Detection>& c, double tau) {
    double sum = 0.0;
    int n = 0;
    for (const auto& d : c)
        if (ref_in_s(d, tau)) {
            sum += d.confidence;
            ++n;
        }
    return n ? sum / n : 0.0;
}

inline double ref_iou_loss(const std::vector<Detection>& c, double tau, const std::vector<BoundingBox>& gt) {
    double sum = 0.0;
    int n = 0;
    for (const auto& d : c) {
        if (!ref_in_s(d, tau)) continue;
        ++n;
        for (const auto& g : gt) sum += ref_iou(d.box, g) * d.confidence;
    }
    if (n == 0 || gt.empty()) return 0.0;
    return sum / (static_cast<double>(n) * static_cast<double>(gt.size()));
}

// Literal ordered-pair sum over the top-K, selected by repeated arg-max.
inline double ref_nms_loss(const std::vector<Detection>& c, std::size_t k, double tau_nms) {
    std::vector<bool> used(c.size(), false);
    std::vector<std::size_t> top;
    while (top.size() < k && top.size() < c.size()) {
        std::size_t best = c.size();
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (used[i]) continue;
            if (best == c.size() || c[i].confidence > c[best].confidence) best = i;
        }
        used[best] = true;
        top.push_back(best);
    }
    if (top.size() < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t i : top)
        for (std::size_t j : top)
            if (i != j) sum += ref_softplus(ref_iou(c[i].box, c[j].box) - tau_nms) * c[i].confidence * c[j].confidence;
    return sum / static_cast<double>(top.size() * (top.size() - 1));
}

inline double ref_app_loss(const RgbImage& p, double sigma_min, double lambda_smooth) {
    const int h = p.height(), w = p.width();
    double sum = 0.0;
    long n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                sum += p.at(y, x, c);
                ++n;
            }
    const double mean = sum / n;
    double var = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) var += (p.at(y, x, c) - mean) * (p.at(y, x, c) - mean);
    const double sd = std::sqrt(var / n);
    double smooth = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x < w; ++x) smooth += std::pow(p.at(y + 1, x, c) - p.at(y, x, c), 2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + 1 < w; ++x) smooth += std::pow(p.at(y, x + 1, c) - p.at(y, x, c), 2);
    }
    return (mean - 0.5) * (mean - 0.5) + std::max(0.0, sigma_min - sd) + lambda_smooth * smooth;
}

// False when a candidate sits within `margin` of a place where the losses
// are not smooth.
inline bool loss_smooth_region(const std::vector<Detection>& c, const std::vector<BoundingBox>& gt, double tau_conf,
                   std::size_t top_k, double margin) {
    std::vector<double> conf;
    for (const auto& d : c) {
        if (std::abs(d.confidence - tau_conf) < margin) return false;
        conf.push_back(d.confidence);
    }
    std::sort(conf.begin(), conf.end(), std::greater<>());
    if (conf.size() > top_k && conf[top_k - 1] - conf[top_k] < margin) return false;
    std::vector<BoundingBox> boxes = gt;
    for (const auto& d : c) boxes.push_back(d.box);
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
            const double xs[] = {boxes[i].x1, boxes[i].x2}, xt[] = {boxes[j].x1, boxes[j].x2};
            const double ys[] = {boxes[i].y1, boxes[i].y2}, yt[] = {boxes[j].y1, boxes[j].y2};
            for (double a : xs)
                for (double b : xt)
                    if (std::abs(a - b) < margin) return false;
            for (double a : ys)
                for (double b : yt)
                    if (std::abs(a - b) < margin) return false;
        }
    return true;
}


inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a - b| <= rel * max(|a|, |b|) + abs_floor.
inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-9) {
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("patchkit_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace patchkit::testing
