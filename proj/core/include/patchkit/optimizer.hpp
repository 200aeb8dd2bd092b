#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchkit/image.hpp"

namespace patchkit {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected first/second moment estimates.
struct AdamMoments {
    std::vector<double> first;
    std::vector<double> second;
    std::uint64_t steps = 0;
};

// One adaptive-moment descent step on `params` in place.
void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& moments,
               double learning_rate, const AdamConfig& cfg = {});

// Clamp to [0, 1] and round to the nearest float so the stored patch is exactly
// what the sidecar format persists.
void project_patch(Patch& patch);

enum class PatchInit { Gray, UniformRandom };

PatchInit parse_patch_init(const std::string& name);

Patch init_patch(int height, int width, PatchInit mode, std::uint64_t seed);

}  // namespace patchkit
