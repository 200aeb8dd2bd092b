#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchkit/evaluation.hpp"

namespace patchkit {

enum class AblationAxis { Epochs, PatchSize, LossTerms, LossWeights, Seeds };

AblationAxis parse_ablation_axis(const std::string& name);
std::string to_string(AblationAxis axis);

struct AblationPoint {
    std::string setting;
    TrainConfig config;
};

struct AblationRow {
    std::string setting;
    std::optional<double> ap_person;
    double asr = 0.0;
    std::string error;
};

// Values swept along each axis. Loss-weight triples are (det, iou, nms).
struct AblationGrid {
    std::vector<int> epochs{1, 5, 25};
    std::vector<double> patch_sizes{0.2, 0.3, 0.4};
    std::vector<std::array<double, 3>> loss_weights{{1.0, 1.0, 0.5}, {1.0, 0.5, 0.5}, {0.5, 1.0, 1.0}};
    std::vector<std::uint64_t> seeds{42, 7, 123, 203};
};

// Non-empty on/off masks over the det/iou/nms terms, in bit order.
std::vector<std::array<bool, 3>> loss_term_masks();

std::vector<AblationPoint> ablation_points(AblationAxis axis, const TrainConfig& base, const AblationGrid& grid);

// Trains and evaluates each point; failures are recorded per row.
std::vector<AblationRow> run_ablation(std::span<const AblationPoint> points, const Dataset& dataset,
                                      const DifferentiableDetector& train_detector, Detector& victim,
                                      const EvalProtocol& protocol);

}  // namespace patchkit
