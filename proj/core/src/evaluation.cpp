#include "patchkit/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "patchkit/error.hpp"
#include "patchkit/parallel.hpp"

namespace patchkit {

namespace {

bool counts(const Detection& d, const EvalProtocol& p) {
    return d.label == p.person_label && d.confidence > p.tau_det;
}

std::vector<DetectorOutput> detect_all(Detector& detector, std::span<const SceneImage> scenes) {
    std::vector<DetectorOutput> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(detector.detect(s));
    return out;
}

std::vector<SceneImage> patched_scenes(std::span<const SceneRecord> scenes, const Patch* patch,
                                       const PlacementSpec& placement, int jobs) {
    std::vector<SceneImage> out(scenes.size());
    parallel_for(scenes.size(), jobs, [&](std::size_t i) {
        out[i] = patch ? apply_to_all_persons(scenes[i].image, *patch, scenes[i].person_boxes, placement).image
                       : scenes[i].image;
    });
    return out;
}

// Scores attacked outputs against clean outputs of the same detector.
EvalReport score(std::span<const SceneRecord> scenes, std::span<const DetectorOutput> clean,
                 std::span<const DetectorOutput> attacked, const EvalProtocol& protocol) {
    const PseudoGroundTruth gt = pseudo_ground_truth_from(clean, protocol);
    EvalReport report;
    report.per_image.resize(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        report.per_image[i].image_id = scenes[i].id;
        report.per_image[i].pseudo_gt = gt.boxes[i].size();
    }
    for (std::size_t i : gt.excluded) report.per_image[i].excluded = true;
    if (gt.total() == 0) {
        report.no_pseudo_gt = true;
        return report;
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        if (!report.per_image[i].excluded) kept.push_back(i);
    std::vector<std::vector<Detection>> dets;
    std::vector<std::vector<BoundingBox>> gts;
    for (std::size_t i : kept) {
        dets.push_back(attacked[i].detections);
        gts.push_back(gt.boxes[i]);
    }
    const ApResult ap = average_precision(dets, gts, protocol);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        report.per_image[kept[k]].matched = ap.per_image[k].matched;
        report.per_image[kept[k]].false_positives = ap.per_image[k].false_positives;
    }
    report.ap_person = ap.ap;
    report.asr = attack_success_rate(gts, dets, protocol);
    return report;
}

}  // namespace

void EvalProtocol::validate() const {
    if (!(iou_match_threshold >= 0.0 && iou_match_threshold <= 1.0))
        throw InvalidArgument("eval.iou_match_threshold must be in [0, 1]");
    if (!(tau_det >= 0.0 && tau_det <= 1.0)) throw InvalidArgument("eval.tau_det must be in [0, 1]");
    if (person_label.empty()) throw InvalidArgument("eval.person_label must not be empty");
}

std::size_t PseudoGroundTruth::total() const {
    std::size_t n = 0;
    for (const auto& b : boxes) n += b.size();
    return n;
}

PseudoGroundTruth pseudo_ground_truth_from(std::span<const DetectorOutput> clean_outputs,
                                           const EvalProtocol& protocol) {
    PseudoGroundTruth gt;
    gt.boxes.resize(clean_outputs.size());
    for (std::size_t i = 0; i < clean_outputs.size(); ++i) {
        for (const auto& d : clean_outputs[i].detections)
            if (counts(d, protocol)) gt.boxes[i].push_back(d.box);
        if (gt.boxes[i].empty()) gt.excluded.push_back(i);
    }
    return gt;
}

PseudoGroundTruth pseudo_ground_truth(Detector& detector, std::span<const SceneImage> clean_scenes,
                                      const EvalProtocol& protocol) {
    const auto outputs = detect_all(detector, clean_scenes);
    return pseudo_ground_truth_from(outputs, protocol);
}

ApResult average_precision(std::span<const std::vector<Detection>> detections,
                           std::span<const std::vector<BoundingBox>> gts, const EvalProtocol& protocol) {
    if (detections.size() != gts.size()) throw InvalidArgument("detections and ground truth differ in image count");
    std::size_t n_gt = 0;
    for (const auto& g : gts) n_gt += g.size();
    if (n_gt == 0) throw NoPseudoGroundTruth();

    struct Ranked {
        double confidence;
        std::size_t image;
        std::size_t index;
    };
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < detections.size(); ++i)
        for (std::size_t k = 0; k < detections[i].size(); ++k)
            if (counts(detections[i][k], protocol)) ranked.push_back({detections[i][k].confidence, i, k});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.image != b.image) return a.image < b.image;
        return a.index < b.index;
    });

    ApResult result;
    result.per_image.resize(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) result.per_image[i].pseudo_gt = gts[i].size();

    std::vector<std::vector<bool>> taken(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), false);

    std::vector<bool> is_tp(ranked.size(), false);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& [conf, img, idx] = ranked[r];
        const BoundingBox& box = detections[img][idx].box;
        double best = -1.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < gts[img].size(); ++g) {
            if (taken[img][g]) continue;
            const double v = iou(box, gts[img][g]);
            if (v > best) {
                best = v;
                best_g = g;
            }
        }
        if (best >= protocol.iou_match_threshold) {
            taken[img][best_g] = true;
            is_tp[r] = true;
            ++result.per_image[img].matched;
        } else {
            ++result.per_image[img].false_positives;
        }
    }

    // Precision after each true positive, then the monotone envelope from the
    // right; the area is the sum of envelope precision per recall step.
    std::vector<double> precision_at_tp;
    std::size_t tp = 0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        if (!is_tp[r]) continue;
        ++tp;
        precision_at_tp.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    }
    double envelope = 0.0;
    double area = 0.0;
    for (auto it = precision_at_tp.rbegin(); it != precision_at_tp.rend(); ++it) {
        envelope = std::max(envelope, *it);
        area += envelope;
    }
    result.ap = 100.0 * area / static_cast<double>(n_gt);
    return result;
}

double attack_success_rate(std::span<const std::vector<BoundingBox>> pseudo_gt,
                           std::span<const std::vector<Detection>> adv_detections, const EvalProtocol& protocol) {
    if (pseudo_gt.size() != adv_detections.size())
        throw InvalidArgument("pseudo ground truth and detections differ in image count");
    std::size_t total = 0;
    std::size_t evaded = 0;
    for (std::size_t i = 0; i < pseudo_gt.size(); ++i) {
        for (const auto& g : pseudo_gt[i]) {
            ++total;
            const bool found = std::any_of(adv_detections[i].begin(), adv_detections[i].end(), [&](const Detection& d) {
                return counts(d, protocol) && iou(d.box, g) >= protocol.iou_match_threshold;
            });
            if (!found) ++evaded;
        }
    }
    if (total == 0) throw NoPseudoGroundTruth();
    return static_cast<double>(evaded) / static_cast<double>(total);
}

EvalReport evaluate_patch(Detector& detector, std::span<const SceneRecord> scenes, const Patch* patch,
                          const PlacementSpec& placement, const EvalProtocol& protocol, int jobs) {
    protocol.validate();
    if (patch) patch->validate();
    std::vector<SceneImage> clean_images;
    clean_images.reserve(scenes.size());
    for (const auto& s : scenes) clean_images.push_back(s.image);
    const auto clean = detect_all(detector, clean_images);
    if (!patch) return score(scenes, clean, clean, protocol);
    const auto attacked = detect_all(detector, patched_scenes(scenes, patch, placement, jobs));
    return score(scenes, clean, attacked, protocol);
}

std::size_t TransferMatrix::computed_cells() const {
    std::size_t n = 0;
    for (const auto& row : cells)
        for (const auto& c : row)
            if (c.error.empty()) ++n;
    return n;
}

TransferMatrix transfer_matrix(const std::map<std::string, Patch>& patches,
                               const std::map<std::string, Detector*>& victims,
                               std::span<const SceneRecord> scenes, const PlacementSpec& placement,
                               const EvalProtocol& protocol) {
    if (patches.empty()) throw InvalidArgument("transfer needs at least one patch");
    if (victims.empty()) throw InvalidArgument("transfer needs at least one victim detector");
    protocol.validate();

    TransferMatrix m;
    for (const auto& [name, p] : patches) m.trained_on.push_back(name);
    for (const auto& [name, v] : victims) m.victims.push_back(name);
    m.cells.assign(patches.size(), std::vector<TransferCell>(victims.size()));

    std::vector<SceneImage> clean_images;
    for (const auto& s : scenes) clean_images.push_back(s.image);

    std::size_t col = 0;
    for (const auto& [vname, victim] : victims) {
        std::vector<DetectorOutput> clean;
        std::string victim_error;
        try {
            clean = detect_all(*victim, clean_images);
        } catch (const std::exception& e) {
            victim_error = e.what();
        }
        std::size_t row = 0;
        for (const auto& [pname, patch] : patches) {
            TransferCell& cell = m.cells[row++][col];
            if (!victim_error.empty()) {
                cell.error = victim_error;
                continue;
            }
            try {
                const auto attacked = detect_all(*victim, patched_scenes(scenes, &patch, placement, 1));
                const EvalReport r = score(scenes, clean, attacked, protocol);
                if (r.no_pseudo_gt)
                    cell.error = "no pseudo-GT";
                else
                    cell.ap_person = r.ap_person;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
        ++col;
    }
    return m;
}

SeedStability seed_stability(const Dataset& dataset, const DifferentiableDetector& train_detector,
                             Detector& victim, const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                             const EvalProtocol& protocol) {
    if (seeds.size() < 2) throw InvalidArgument("seed stability needs at least two seeds");
    SeedStability out;
    for (std::uint64_t seed : seeds) {
        SeedRun run;
        run.seed = seed;
        try {
            TrainConfig c = cfg;
            c.seed = seed;
            TrainResult r = train(dataset, train_detector, c);
            run.history = std::move(r.history);
            run.patch = std::move(r.patch);
            const EvalReport rep = evaluate_patch(victim, dataset.records, &run.patch, c.placement, protocol, c.jobs);
            if (rep.no_pseudo_gt)
                run.error = "no pseudo-GT";
            else
                run.ap_person = rep.ap_person;
        } catch (const Error& e) {
            run.error = e.what();
        }
        out.runs.push_back(std::move(run));
    }
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& r : out.runs) {
        if (!r.ap_person) continue;
        lo = any ? std::min(lo, *r.ap_person) : *r.ap_person;
        hi = any ? std::max(hi, *r.ap_person) : *r.ap_person;
        any = true;
    }
    out.spread = hi - lo;
    return out;
}

}  // namespace patchkit
