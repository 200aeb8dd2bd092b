#include "patchkit/experiments.hpp"

#include <cstdio>

#include "patchkit/error.hpp"

namespace patchkit {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

AblationAxis parse_ablation_axis(const std::string& name) {
    if (name == "epochs") return AblationAxis::Epochs;
    if (name == "patch-size") return AblationAxis::PatchSize;
    if (name == "loss-terms") return AblationAxis::LossTerms;
    if (name == "loss-weights") return AblationAxis::LossWeights;
    if (name == "seeds") return AblationAxis::Seeds;
    throw InvalidArgument("unknown ablation axis '" + name +
                          "' (expected epochs, patch-size, loss-terms, loss-weights or seeds)");
}

std::string to_string(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::Epochs: return "epochs";
        case AblationAxis::PatchSize: return "patch-size";
        case AblationAxis::LossTerms: return "loss-terms";
        case AblationAxis::LossWeights: return "loss-weights";
        case AblationAxis::Seeds: return "seeds";
    }
    return "unknown";
}

std::vector<std::array<bool, 3>> loss_term_masks() {
    std::vector<std::array<bool, 3>> out;
    for (unsigned bits = 1; bits < 8; ++bits) out.push_back({(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0});
    return out;
}

std::vector<AblationPoint> ablation_points(AblationAxis axis, const TrainConfig& base_in, const AblationGrid& grid) {
    // Sweep points are short-lived; they never checkpoint.
    TrainConfig base = base_in;
    base.checkpoint_every = 0;
    base.checkpoint_dir.clear();
    std::vector<AblationPoint> out;
    switch (axis) {
        case AblationAxis::Epochs:
            for (int e : grid.epochs) {
                TrainConfig c = base;
                c.epochs = e;
                out.push_back({"epochs=" + std::to_string(e), c});
            }
            break;
        case AblationAxis::PatchSize:
            for (double b : grid.patch_sizes) {
                TrainConfig c = base;
                c.placement.scale_fraction = b;
                out.push_back({"beta=" + num(b), c});
            }
            break;
        case AblationAxis::LossTerms:
            for (const auto& mask : loss_term_masks()) {
                TrainConfig c = base;
                std::string name;
                const auto use = [&](bool on, double& w, const char* label) {
                    if (!on) {
                        w = 0.0;
                        return;
                    }
                    if (!name.empty()) name += "+";
                    name += label;
                };
                use(mask[0], c.weights.det, "det");
                use(mask[1], c.weights.iou, "iou");
                use(mask[2], c.weights.nms, "nms");
                out.push_back({name, c});
            }
            break;
        case AblationAxis::LossWeights:
            for (const auto& w : grid.loss_weights) {
                TrainConfig c = base;
                c.weights.det = w[0];
                c.weights.iou = w[1];
                c.weights.nms = w[2];
                out.push_back({"det=" + num(w[0]) + " iou=" + num(w[1]) + " nms=" + num(w[2]), c});
            }
            break;
        case AblationAxis::Seeds:
            for (std::uint64_t s : grid.seeds) {
                TrainConfig c = base;
                c.seed = s;
                out.push_back({"seed=" + std::to_string(s), c});
            }
            break;
    }
    return out;
}

std::vector<AblationRow> run_ablation(std::span<const AblationPoint> points, const Dataset& dataset,
                                      const DifferentiableDetector& train_detector, Detector& victim,
                                      const EvalProtocol& protocol) {
    std::vector<AblationRow> rows;
    for (const auto& p : points) {
        AblationRow row;
        row.setting = p.setting;
        try {
            const TrainResult r = train(dataset, train_detector, p.config);
            const EvalReport rep =
                evaluate_patch(victim, dataset.records, &r.patch, p.config.placement, protocol, p.config.jobs);
            if (rep.no_pseudo_gt) {
                row.error = "no pseudo-GT";
            } else {
                row.ap_person = rep.ap_person;
                row.asr = rep.asr;
            }
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace patchkit
