#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "patchkit/geometry.hpp"
#include "patchkit/image.hpp"

namespace patchkit {

struct LossWeights {
    double det = 1.0;
    double iou = 1.0;
    double nms = 0.5;
    double app = 0.1;

    void validate() const;
};

struct AppearanceConfig {
    double sigma_min = 0.1;
    double lambda_smooth = 0.01;

    void validate() const;
};

struct AttackThresholds {
    double conf = 0.25;  // candidate filter for the confidence and IoU terms
    double nms = 0.5;    // NMS overlap threshold
    std::size_t top_k = 20;
    double det = 0.5;    // final detection threshold

    void validate() const;
};

struct LossBreakdown {
    double det = 0.0;
    double iou = 0.0;
    double nms = 0.0;
    double app = 0.0;
    double total = 0.0;
};

// Destination for loss gradients: out[n] += scale * dL/d(candidate n).
// An empty span disables gradient computation.
struct GradientSink {
    std::span<CandidateGrad> out;
    double scale = 1.0;

    bool active() const { return !out.empty(); }
};

// Indices of person candidates with confidence strictly above tau_conf.
std::vector<std::size_t> person_candidates(std::span<const Detection> candidates, double tau_conf);

// Mean person confidence over the filtered set; 0 when the set is empty.
double detection_confidence_loss(std::span<const Detection> candidates, double tau_conf,
                                 GradientSink sink = {});

// Confidence-weighted IoU against ground truth, normalized by |S| * |GT|.
double bbox_iou_loss(std::span<const Detection> candidates, double tau_conf,
                     std::span<const BoundingBox> gt_boxes, GradientSink sink = {});

// log(1 + e^u) without overflow or underflow to NaN.
double softplus(double u);

// Mean of softplus(IoU - tau_nms) * c_i * c_j over ordered pairs of the top-K
// candidates. Ranking is by confidence descending, index ascending.
double nms_disruption_loss(std::span<const Detection> candidates, std::size_t top_k, double tau_nms,
                           GradientSink sink = {});

// Indices of the top-K candidates under the deterministic tie-break.
std::vector<std::size_t> top_k_indices(std::span<const Detection> candidates, std::size_t top_k);

struct PatchStatistics {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

PatchStatistics patch_statistics(const Patch& patch);

// (mean - 0.5)^2 + max(0, sigma_min - stddev) + lambda_smooth * |grad p|^2.
// When `grad` is non-empty, adds scale * dL/dp to it.
double appearance_loss(const Patch& patch, const AppearanceConfig& cfg, std::span<double> grad = {},
                       double scale = 1.0);

// Squared forward differences summed over channels, both directions, no wrap.
double smoothness_energy(const Patch& patch);

// The three detection-dependent terms. The NMS term ranks only person-class
// candidates. Unweighted values are returned in det/iou/nms; gradients of the
// weighted sum are written to `sink`.
LossBreakdown detection_losses(std::span<const Detection> candidates,
                               std::span<const BoundingBox> gt_boxes, const LossWeights& weights,
                               const AttackThresholds& thresholds, GradientSink sink = {});

// All four terms and their weighted total.
LossBreakdown total_loss(std::span<const Detection> candidates, std::span<const BoundingBox> gt_boxes,
                         const Patch& patch, const LossWeights& weights,
                         const AttackThresholds& thresholds, const AppearanceConfig& app_cfg);

double weighted_total(const LossBreakdown& b, const LossWeights& w);

}  // namespace patchkit
