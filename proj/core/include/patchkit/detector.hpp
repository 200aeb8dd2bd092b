#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "patchkit/geometry.hpp"
#include "patchkit/image.hpp"

namespace patchkit {

// Where a raw candidate came from, so its gradient can be routed back to the
// input pixels. Only meaningful to the detector that produced it.
struct CandidateOrigin {
    int template_index = 0;
    int window_x = 0;
    int window_y = 0;
    std::array<double, 4> offset_preactivation{};
};

// Pre-NMS output of a differentiable detector.
struct RawCandidates {
    std::vector<Detection> detections;
    std::vector<CandidateOrigin> origins;  // parallel to detections
};

// Post-NMS, thresholded detections.
struct DetectorOutput {
    std::vector<Detection> detections;
};

// In-process detector that exposes gradients; used for training.
class DifferentiableDetector {
public:
    virtual ~DifferentiableDetector() = default;

    virtual RawCandidates forward(const SceneImage& image) const = 0;

    // d(objective)/d(image) given d(objective)/d(each candidate).
    virtual RgbImage backward(const SceneImage& image, const RawCandidates& candidates,
                              std::span<const CandidateGrad> grads) const = 0;
};

// Anything that returns final detections for an image; used for evaluation.
class Detector {
public:
    virtual ~Detector() = default;
    virtual std::string name() const = 0;
    virtual DetectorOutput detect(const SceneImage& image) = 0;
};

}  // namespace patchkit
