#include "patchkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchkit/error.hpp"

namespace patchkit {

namespace {

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }
bool unit(double v) { return v >= 0.0 && v <= 1.0; }

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

bool is_person(const Detection& d) { return d.label == kPersonLabel; }

}  // namespace

void LossWeights::validate() const {
    if (!finite_nonneg(det) || !finite_nonneg(iou) || !finite_nonneg(nms) || !finite_nonneg(app))
        throw InvalidArgument("loss weights must be finite and non-negative");
}

void AppearanceConfig::validate() const {
    if (!finite_nonneg(sigma_min)) throw InvalidArgument("appearance.sigma_min must be finite and >= 0");
    if (!finite_nonneg(lambda_smooth)) throw InvalidArgument("appearance.lambda_smooth must be finite and >= 0");
}

void AttackThresholds::validate() const {
    if (!unit(conf)) throw InvalidArgument("thresholds.conf must be in [0, 1]");
    if (!unit(nms)) throw InvalidArgument("thresholds.nms must be in [0, 1]");
    if (!unit(det)) throw InvalidArgument("thresholds.det must be in [0, 1]");
    if (top_k < 2) throw InvalidArgument("thresholds.top_k must be >= 2");
}

std::vector<std::size_t> person_candidates(std::span<const Detection> candidates, double tau_conf) {
    std::vector<std::size_t> s;
    for (std::size_t n = 0; n < candidates.size(); ++n) {
        if (is_person(candidates[n]) && candidates[n].confidence > tau_conf) s.push_back(n);
    }
    return s;
}

double detection_confidence_loss(std::span<const Detection> candidates, double tau_conf, GradientSink sink) {
    const auto s = person_candidates(candidates, tau_conf);
    if (s.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(s.size());
    double sum = 0.0;
    for (std::size_t n : s) {
        sum += candidates[n].confidence;
        if (sink.active()) sink.out[n].confidence += sink.scale * inv;
    }
    return sum * inv;
}

double bbox_iou_loss(std::span<const Detection> candidates, double tau_conf, std::span<const BoundingBox> gt_boxes,
                     GradientSink sink) {
    const auto s = person_candidates(candidates, tau_conf);
    if (s.empty() || gt_boxes.empty()) return 0.0;
    const double norm = 1.0 / (static_cast<double>(s.size()) * static_cast<double>(gt_boxes.size()));

    double sum = 0.0;
    BoxGradient ga{}, gb{};
    for (std::size_t n : s) {
        const Detection& d = candidates[n];
        double overlap = 0.0;
        BoxGradient dbox{};
        for (const BoundingBox& gt : gt_boxes) {
            overlap += iou_with_gradient(d.box, gt, ga, gb);
            for (std::size_t k = 0; k < 4; ++k) dbox[k] += ga[k];
        }
        sum += overlap * d.confidence;
        if (sink.active()) {
            sink.out[n].confidence += sink.scale * norm * overlap;
            for (std::size_t k = 0; k < 4; ++k) sink.out[n].box[k] += sink.scale * norm * d.confidence * dbox[k];
        }
    }
    return sum * norm;
}

double softplus(double u) {
    if (u > 30.0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

std::vector<std::size_t> top_k_indices(std::span<const Detection> candidates, std::size_t top_k) {
    std::vector<std::size_t> idx(candidates.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto by_rank = [&](std::size_t a, std::size_t b) {
        if (candidates[a].confidence != candidates[b].confidence)
            return candidates[a].confidence > candidates[b].confidence;
        return a < b;
    };
    const std::size_t k = std::min(top_k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), by_rank);
    idx.resize(k);
    return idx;
}

double nms_disruption_loss(std::span<const Detection> candidates, std::size_t top_k, double tau_nms,
                           GradientSink sink) {
    const auto top = top_k_indices(candidates, top_k);
    const std::size_t k = top.size();
    if (k < 2) return 0.0;
    const double pairs = static_cast<double>(k * (k - 1));

    // The summand is symmetric in (i, j): every unordered pair counts twice.
    double sum = 0.0;
    BoxGradient ga{}, gb{};
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            const Detection& di = candidates[top[a]];
            const Detection& dj = candidates[top[b]];
            const double overlap = sink.active() ? iou_with_gradient(di.box, dj.box, ga, gb) : iou(di.box, dj.box);
            const double pen = softplus(overlap - tau_nms);
            sum += 2.0 * pen * di.confidence * dj.confidence;
            if (sink.active()) {
                const double f = sink.scale * 2.0 / pairs;
                const double dpen = sigmoid(overlap - tau_nms) * di.confidence * dj.confidence;
                sink.out[top[a]].confidence += f * pen * dj.confidence;
                sink.out[top[b]].confidence += f * pen * di.confidence;
                for (std::size_t c = 0; c < 4; ++c) {
                    sink.out[top[a]].box[c] += f * dpen * ga[c];
                    sink.out[top[b]].box[c] += f * dpen * gb[c];
                }
            }
        }
    }
    return sum / pairs;
}

PatchStatistics patch_statistics(const Patch& patch) {
    const auto v = patch.values();
    if (v.empty()) return {};
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / n)};
}

double smoothness_energy(const Patch& patch) {
    double e = 0.0;
    for (int y = 0; y < patch.height(); ++y) {
        for (int x = 0; x < patch.width(); ++x) {
            for (int c = 0; c < RgbImage::kChannels; ++c) {
                const double p = patch.at(y, x, c);
                if (y + 1 < patch.height()) {
                    const double d = patch.at(y + 1, x, c) - p;
                    e += d * d;
                }
                if (x + 1 < patch.width()) {
                    const double d = patch.at(y, x + 1, c) - p;
                    e += d * d;
                }
            }
        }
    }
    return e;
}

double appearance_loss(const Patch& patch, const AppearanceConfig& cfg, std::span<double> grad, double scale) {
    const PatchStatistics st = patch_statistics(patch);
    const double spread_gap = cfg.sigma_min - st.stddev;
    const double loss = (st.mean - 0.5) * (st.mean - 0.5) + std::max(0.0, spread_gap) +
                        cfg.lambda_smooth * smoothness_energy(patch);
    if (grad.empty()) return loss;

    const auto v = patch.values();
    const double n = static_cast<double>(v.size());
    const double dmean = scale * 2.0 * (st.mean - 0.5) / n;
    // The standard deviation has no derivative at zero; use 0 there.
    const bool spread_active = spread_gap > 0.0 && st.stddev > 0.0;
    const double dstd = spread_active ? -scale / (n * st.stddev) : 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) grad[i] += dmean + dstd * (v[i] - st.mean);

    if (cfg.lambda_smooth > 0.0) {
        const double f = scale * cfg.lambda_smooth * 2.0;
        for (int y = 0; y < patch.height(); ++y) {
            for (int x = 0; x < patch.width(); ++x) {
                for (int c = 0; c < RgbImage::kChannels; ++c) {
                    const std::size_t here = patch.index(y, x, c);
                    if (y + 1 < patch.height()) {
                        const std::size_t below = patch.index(y + 1, x, c);
                        const double d = v[below] - v[here];
                        grad[below] += f * d;
                        grad[here] -= f * d;
                    }
                    if (x + 1 < patch.width()) {
                        const std::size_t right = patch.index(y, x + 1, c);
                        const double d = v[right] - v[here];
                        grad[right] += f * d;
                        grad[here] -= f * d;
                    }
                }
            }
        }
    }
    return loss;
}

double weighted_total(const LossBreakdown& b, const LossWeights& w) {
    return w.det * b.det + w.iou * b.iou + w.nms * b.nms + w.app * b.app;
}

LossBreakdown detection_losses(std::span<const Detection> candidates, std::span<const BoundingBox> gt_boxes,
                               const LossWeights& weights, const AttackThresholds& thresholds, GradientSink sink) {
    const auto scaled = [&](double w) {
        return w > 0.0 && sink.active() ? GradientSink{sink.out, sink.scale * w} : GradientSink{};
    };

    LossBreakdown b;
    b.det = detection_confidence_loss(candidates, thresholds.conf, scaled(weights.det));
    b.iou = bbox_iou_loss(candidates, thresholds.conf, gt_boxes, scaled(weights.iou));

    std::vector<Detection> persons;
    std::vector<std::size_t> origin;
    for (std::size_t n = 0; n < candidates.size(); ++n) {
        if (is_person(candidates[n])) {
            persons.push_back(candidates[n]);
            origin.push_back(n);
        }
    }
    const GradientSink nms_sink = scaled(weights.nms);
    std::vector<CandidateGrad> local(nms_sink.active() ? persons.size() : 0);
    b.nms = nms_disruption_loss(persons, thresholds.top_k, thresholds.nms,
                                nms_sink.active() ? GradientSink{local, nms_sink.scale} : GradientSink{});
    for (std::size_t i = 0; i < local.size(); ++i) {
        CandidateGrad& dst = sink.out[origin[i]];
        dst.confidence += local[i].confidence;
        for (std::size_t k = 0; k < 4; ++k) dst.box[k] += local[i].box[k];
    }
    b.total = weighted_total(b, weights);
    return b;
}

LossBreakdown total_loss(std::span<const Detection> candidates, std::span<const BoundingBox> gt_boxes,
                         const Patch& patch, const LossWeights& weights, const AttackThresholds& thresholds,
                         const AppearanceConfig& app_cfg) {
    LossBreakdown b = detection_losses(candidates, gt_boxes, weights, thresholds);
    b.app = appearance_loss(patch, app_cfg);
    b.total = weighted_total(b, weights);
    return b;
}

}  // namespace patchkit
