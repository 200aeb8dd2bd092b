#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "patchkit/geometry.hpp"
#include "patchkit/homography.hpp"
#include "patchkit/image.hpp"

namespace patchkit {

struct AugmentConfig {
    double brightness_delta = 0.2;   // alpha ~ U[1 - d, 1 + d]
    double noise_std = 0.02;
    double rotation_range = 0.17453292519943295;  // +/- radians (10 degrees)
    double scale_min = 0.9;
    double scale_max = 1.1;
    double perspective_magnitude = 0.05;
    int draws_per_image = 1;

    void validate() const;
};

struct AugmentDraw {
    double alpha = 1.0;
    std::vector<double> noise;  // H*W*3, empty means zero noise
    Homography transform;       // input pixel coords -> output pixel coords
};

using Rng = std::mt19937_64;

// Independent generator for (seed, epoch, item) so parallel workers reproduce
// the sequential run.
Rng make_substream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t item);

AugmentDraw sample_augmentation(const AugmentConfig& cfg, Rng& rng, int height, int width);

// Per-pixel record of the augmentation's linear part, for backpropagation.
struct AugmentTrace {
    int height = 0;
    int width = 0;
    double alpha = 1.0;
    bool identity_warp = true;
    // For each output pixel: 4 source pixel indices and weights.
    std::vector<std::uint32_t> taps;
    std::vector<double> weights;
    // 1 where the clamp was inactive, per value.
    std::vector<std::uint8_t> pass;
};

// clip(alpha * transform(image) + noise, 0, 1). Out-of-frame samples repeat
// the border. When `trace` is non-null it receives what backward needs.
SceneImage augment(const SceneImage& image, const AugmentDraw& draw, AugmentTrace* trace = nullptr);

// d(objective)/d(input) given d(objective)/d(output).
RgbImage augment_backward(const AugmentTrace& trace, const RgbImage& output_grad);

// Axis-aligned hull of the box mapped through the draw's geometric transform,
// clipped to the frame.
BoundingBox transform_box(const BoundingBox& box, const Homography& transform, int height, int width);

}  // namespace patchkit
