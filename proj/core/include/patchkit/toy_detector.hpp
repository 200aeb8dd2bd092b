#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "patchkit/detector.hpp"
#include "patchkit/losses.hpp"

namespace patchkit {

// A correlation template built from a grid of constant cells. Weights and tile
// colors are stored per cell and channel, row-major (grid_rows, grid_cols, 3).
struct ToyTemplate {
    std::string label;
    std::vector<double> cell_weights;  // per-pixel weight inside each cell
    std::vector<double> tile;          // appearance that scores exactly 1 + bias
    double bias = 0.0;
};

struct ToyDetectorParams {
    int grid_rows = 8;
    int grid_cols = 8;
    int cell_size = 8;   // pixels per cell side
    int stride = 8;
    double sharpness = 10.0;
    double max_offset_fraction = 0.25;
    std::vector<ToyTemplate> templates;
    // Offset head: 4 rows of (grid_rows * grid_cols * 3) weights over cell means.
    std::array<std::vector<double>, 4> offset_weights;
    std::array<double, 4> offset_bias{};

    int template_height() const { return grid_rows * cell_size; }
    int template_width() const { return grid_cols * cell_size; }
    std::size_t cell_count() const { return static_cast<std::size_t>(grid_rows * grid_cols); }

    void validate() const;

    // Person-analog and distractor templates plus a seeded offset head.
    static ToyDetectorParams standard(std::uint64_t seed = 7);
};

// Zero-mean weights normalized so that correlating with `tile` gives exactly 1.
std::vector<double> matched_weights(const std::vector<double>& tile, const std::vector<double>& mask, double cell_area);

// Sliding-window template correlator with a sigmoid confidence and a tanh-bounded
// box offset head. Deterministic and never trained.
class ToyDetector : public DifferentiableDetector {
public:
    explicit ToyDetector(ToyDetectorParams params);

    const ToyDetectorParams& params() const { return params_; }

    RawCandidates forward(const SceneImage& image) const override;
    RgbImage backward(const SceneImage& image, const RawCandidates& candidates,
                      std::span<const CandidateGrad> grads) const override;

    // Template expanded to a dense (template_height x template_width x 3) array.
    RgbImage dense_template(std::size_t index) const;
    // Template tile rendered at full resolution.
    RgbImage render_tile(std::size_t index) const;

private:
    ToyDetectorParams params_;
};

// Toy detector followed by greedy NMS, for the evaluation tier.
class ToyEvalDetector : public Detector {
public:
    ToyEvalDetector(std::string name, ToyDetectorParams params, AttackThresholds thresholds);

    std::string name() const override { return name_; }
    DetectorOutput detect(const SceneImage& image) override;

    const ToyDetector& model() const { return model_; }

private:
    std::string name_;
    ToyDetector model_;
    AttackThresholds thresholds_;
};

}  // namespace patchkit
