#include "patchkit/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "patchkit/error.hpp"

namespace patchkit {

void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& moments, double learning_rate,
               const AdamConfig& cfg) {
    if (params.size() != grad.size()) throw InvalidArgument("parameter and gradient sizes differ");
    if (moments.first.size() != params.size()) {
        moments.first.assign(params.size(), 0.0);
        moments.second.assign(params.size(), 0.0);
        moments.steps = 0;
    }
    ++moments.steps;
    const double t = static_cast<double>(moments.steps);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        moments.first[i] = cfg.beta1 * moments.first[i] + (1.0 - cfg.beta1) * g;
        moments.second[i] = cfg.beta2 * moments.second[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = moments.first[i] / c1;
        const double v_hat = moments.second[i] / c2;
        params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

void project_patch(Patch& patch) {
    for (double& v : patch.values()) v = static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0)));
}

PatchInit parse_patch_init(const std::string& name) {
    if (name == "gray") return PatchInit::Gray;
    if (name == "uniform-random" || name == "random") return PatchInit::UniformRandom;
    throw InvalidArgument("unknown patch init mode '" + name + "' (expected gray or uniform-random)");
}

Patch init_patch(int height, int width, PatchInit mode, std::uint64_t seed) {
    if (height < 1 || width < 1) throw InvalidArgument("patch resolution must be at least 1x1");
    Patch p(height, width, 0.5);
    if (mode == PatchInit::UniformRandom) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (double& v : p.values()) v = unit(rng);
        project_patch(p);
    }
    return p;
}

}  // namespace patchkit
