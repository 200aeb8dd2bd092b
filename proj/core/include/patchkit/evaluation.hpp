#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchkit/compositor.hpp"
#include "patchkit/dataset.hpp"
#include "patchkit/detector.hpp"
#include "patchkit/error.hpp"
#include "patchkit/trainer.hpp"

namespace patchkit {

struct EvalProtocol {
    double iou_match_threshold = 0.5;
    double tau_det = 0.5;
    std::string person_label = kPersonLabel;

    void validate() const;
};

// Raised when no image has a pseudo-ground-truth box.
class NoPseudoGroundTruth : public Error {
public:
    NoPseudoGroundTruth() : Error("no pseudo-GT") {}
};

struct PseudoGroundTruth {
    std::vector<std::vector<BoundingBox>> boxes;  // per image
    std::vector<std::size_t> excluded;            // images with no clean detection

    std::size_t total() const;
};

PseudoGroundTruth pseudo_ground_truth(Detector& detector, std::span<const SceneImage> clean_scenes,
                                      const EvalProtocol& protocol);

// Builds pseudo ground truth from already-computed clean outputs.
PseudoGroundTruth pseudo_ground_truth_from(std::span<const DetectorOutput> clean_outputs,
                                           const EvalProtocol& protocol);

struct ImageMatch {
    std::size_t pseudo_gt = 0;
    std::size_t matched = 0;
    std::size_t false_positives = 0;
};

struct ApResult {
    double ap = 0.0;  // percent
    std::vector<ImageMatch> per_image;
};

// All-point interpolated AP (percent) over person detections pooled across
// images at a single IoU threshold. Throws NoPseudoGroundTruth when the
// ground truth is empty.
ApResult average_precision(std::span<const std::vector<Detection>> detections,
                           std::span<const std::vector<BoundingBox>> gts, const EvalProtocol& protocol);

// Fraction of pseudo-GT boxes with no matching detection above tau_det.
double attack_success_rate(std::span<const std::vector<BoundingBox>> pseudo_gt,
                           std::span<const std::vector<Detection>> adv_detections,
                           const EvalProtocol& protocol);

struct ImageRecord {
    std::string image_id;
    std::size_t pseudo_gt = 0;
    std::size_t matched = 0;
    std::size_t false_positives = 0;
    bool excluded = false;
};

struct EvalReport {
    std::optional<double> ap_person;  // empty when there is no pseudo-GT
    double asr = 0.0;
    std::vector<ImageRecord> per_image;
    bool no_pseudo_gt = false;
};

// Clean pseudo-GT, then patched scenes (patch on every annotated person box),
// then AP and ASR. A null patch evaluates clean against clean.
EvalReport evaluate_patch(Detector& detector, std::span<const SceneRecord> scenes, const Patch* patch,
                          const PlacementSpec& placement, const EvalProtocol& protocol, int jobs = 1);

struct TransferCell {
    std::optional<double> ap_person;
    std::string error;  // set when the cell could not be computed
};

struct TransferMatrix {
    std::vector<std::string> trained_on;  // rows
    std::vector<std::string> victims;     // columns
    std::vector<std::vector<TransferCell>> cells;

    std::size_t computed_cells() const;
};

// Every (patch, victim) pair; a failing victim marks its cells unavailable
// instead of aborting.
TransferMatrix transfer_matrix(const std::map<std::string, Patch>& patches,
                               const std::map<std::string, Detector*>& victims,
                               std::span<const SceneRecord> scenes, const PlacementSpec& placement,
                               const EvalProtocol& protocol);

struct SeedRun {
    std::uint64_t seed = 0;
    std::optional<double> ap_person;
    std::vector<LossBreakdown> history;
    Patch patch;
    std::string error;
};

struct SeedStability {
    std::vector<SeedRun> runs;
    double spread = 0.0;  // max - min final ap_person over successful runs
};

// Trains once per seed and evaluates each patch. Needs at least two seeds.
SeedStability seed_stability(const Dataset& dataset, const DifferentiableDetector& train_detector,
                             Detector& victim, const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                             const EvalProtocol& protocol);

}  // namespace patchkit
