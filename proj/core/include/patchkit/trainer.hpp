#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "patchkit/augmentation.hpp"
#include "patchkit/compositor.hpp"
#include "patchkit/dataset.hpp"
#include "patchkit/detector.hpp"
#include "patchkit/losses.hpp"
#include "patchkit/optimizer.hpp"

namespace patchkit {

struct TrainConfig {
    double learning_rate = 0.02;
    int batch_size = 8;
    int epochs = 25;
    int input_height = 640;
    int input_width = 640;
    int patch_height = 128;
    int patch_width = 128;
    PatchInit init = PatchInit::Gray;
    std::uint64_t seed = 42;
    bool augment = true;
    int jobs = 1;
    int checkpoint_every = 0;  // steps; 0 disables
    std::filesystem::path checkpoint_dir;

    LossWeights weights;
    AttackThresholds thresholds;
    AppearanceConfig appearance;
    AugmentConfig augmentation;
    PlacementSpec placement;
    AdamConfig adam;

    void validate() const;
};

struct TrainState {
    Patch patch;
    std::uint64_t step = 0;
    AdamMoments moments;
    std::vector<LossBreakdown> history;
};

struct BatchItem {
    const SceneRecord* scene = nullptr;
    std::uint64_t index = 0;  // position in the dataset, selects the rng substream
};

// Batch-averaged loss and its gradient with respect to the patch.
struct BatchObjective {
    LossBreakdown loss;
    RgbImage gradient;
};

// Composites, augments, detects and differentiates every scene in the batch.
// Per-image terms are averaged in index order; the appearance term is added
// once on the raw patch.
BatchObjective evaluate_batch(const Patch& patch, std::span<const BatchItem> batch,
                              const DifferentiableDetector& detector, const TrainConfig& cfg,
                              std::uint64_t epoch);

// One projected adaptive-moment step. Throws TrainingError naming the term
// when a loss or gradient is not finite.
LossBreakdown train_step(TrainState& state, std::span<const BatchItem> batch,
                         const DifferentiableDetector& detector, const TrainConfig& cfg,
                         std::uint64_t epoch);

struct TrainResult {
    Patch patch;
    std::vector<LossBreakdown> history;
};

using StepObserver = std::function<void(const TrainState&, std::uint64_t epoch)>;

// Seeded shuffle per epoch, then train_step over consecutive batches.
TrainResult train(const Dataset& dataset, const DifferentiableDetector& detector, const TrainConfig& cfg,
                  const StepObserver& observer = {});

// Epoch means of the total loss, for convergence checks and plots.
std::vector<double> epoch_mean_totals(std::span<const LossBreakdown> history, std::size_t steps_per_epoch);

}  // namespace patchkit
