#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "patchkit/geometry.hpp"
#include "patchkit/homography.hpp"
#include "patchkit/image.hpp"

namespace patchkit {

// Where and how a patch sits on a person box.
struct PlacementSpec {
    double scale_fraction = 0.3;    // patch width / box width, in (0, 1]
    double vertical_anchor = 0.4;   // patch center below box top, fraction of box height
    double rotation = 0.0;          // radians
    double perspective_magnitude = 0.0;

    void validate() const;
};

// Per-application perturbation of a placement; the default is no jitter.
struct PlacementJitter {
    double shift_x = 0.0;  // fraction of box width
    double shift_y = 0.0;  // fraction of box height
    double scale = 1.0;
    double rotation = 0.0;
};

// Maps normalized patch coordinates [0,1]^2 onto image pixel coordinates.
// `aspect` is the patch height / width ratio. Throws InvalidArgument for a
// zero-area box.
Homography compute_placement(const BoundingBox& gt_box, const PlacementSpec& spec,
                             const PlacementJitter& jitter = {}, double aspect = 1.0);

// One composited output pixel: four bilinear taps into the patch. Every
// channel uses the same taps.
struct PatchSample {
    std::uint32_t pixel = 0;  // y * width + x in the output image
    std::array<std::uint32_t, 4> taps{};
    std::array<double, 4> weights{};
};

// Output of compositing plus the linear map from patch values to the pixels
// it wrote, enough to backpropagate to the patch.
struct Composite {
    SceneImage image;
    std::vector<PatchSample> samples;  // final writer per covered pixel
    int placements_outside = 0;        // placements that missed the frame entirely
};

Composite apply_patch(const SceneImage& image, const Patch& patch, const Homography& transform);

// Applies the patch once per box in annotation order; later placements win in
// overlapping regions.
Composite apply_to_all_persons(const SceneImage& image, const Patch& patch,
                               std::span<const BoundingBox> gt_boxes, const PlacementSpec& spec,
                               std::span<const PlacementJitter> jitter = {});

// Accumulates d(objective)/d(patch) into `patch_grad` given the gradient with
// respect to the composited image.
void composite_backward(const Composite& composite, const RgbImage& image_grad, RgbImage& patch_grad);

}  // namespace patchkit
