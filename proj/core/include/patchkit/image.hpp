#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace patchkit {

struct BoundingBox;

// H x W x 3 interleaved RGB raster of doubles, nominally in [0, 1].
class RgbImage {
public:
    static constexpr int kChannels = 3;

    RgbImage() = default;
    RgbImage(int height, int width, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
    double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * kChannels + static_cast<std::size_t>(c);
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    // True when every value lies in [0, 1].
    bool in_unit_range() const;

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

using SceneImage = RgbImage;

// The optimization variable. Kept as a distinct type so scene images and
// patches cannot be swapped by accident.
class Patch : public RgbImage {
public:
    Patch() = default;
    Patch(int height, int width, double fill = 0.5) : RgbImage(height, width, fill) {}
    explicit Patch(RgbImage pixels) : RgbImage(std::move(pixels)) {}

    // Throws InvalidArgument when empty or outside [0, 1].
    void validate() const;
};

// Bilinear resample to (height, width) with pixel-center alignment.
RgbImage resize_bilinear(const RgbImage& src, int height, int width);

// Scales box coordinates from a (src_h, src_w) frame to (dst_h, dst_w).
BoundingBox scale_box(const BoundingBox& b, int src_h, int src_w, int dst_h, int dst_w);

}  // namespace patchkit
