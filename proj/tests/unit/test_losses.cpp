#include <gtest/gtest.h>

#include <numeric>

#include "patchkit/losses.hpp"
#include "support/test_support.hpp"

using namespace patchkit;
namespace pt = patchkit::testing;
using pt::Gen;

namespace {

Detection person(double c, BoundingBox b = {0, 0, 10, 10}) { return {b, kPersonLabel, c}; }

// All candidates' confidences and box coordinates, flattened for perturbation.
double& param(std::vector<Detection>& c, std::size_t k) {
    Detection& d = c[k / 5];
    switch (k % 5) {
        case 0: return d.confidence;
        case 1: return d.box.x1;
        case 2: return d.box.y1;
        case 3: return d.box.x2;
        default: return d.box.y2;
    }
}

double grad_of(const std::vector<CandidateGrad>& g, std::size_t k) {
    const auto& x = g[k / 5];
    return k % 5 == 0 ? x.confidence : x.box[k % 5 - 1];
}

}  // namespace

TEST(PersonCandidates, FiltersByLabelAndThreshold) {
    const std::vector<Detection> c{person(0.9), person(0.05), {{0, 0, 1, 1}, "car", 0.8}};
    EXPECT_EQ(person_candidates(c, 0.25), std::vector<std::size_t>{0});
    EXPECT_TRUE(person_candidates({}, 0.25).empty());
    const std::vector<Detection> all{person(1.0), person(1.0), person(1.0)};
    EXPECT_EQ(person_candidates(all, 0.25), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(PersonCandidates, ThresholdIsStrict) { EXPECT_TRUE(person_candidates(std::vector{person(0.25)}, 0.25).empty()); }

TEST(DetectionLoss, Examples) {
    EXPECT_NEAR(detection_confidence_loss(std::vector{person(0.9), person(0.7)}, 0.25), 0.8, 1e-15);
    EXPECT_EQ(detection_confidence_loss(std::vector{person(0.1)}, 0.25), 0.0);
    EXPECT_EQ(detection_confidence_loss(std::vector{person(0.5)}, 0.25), 0.5);
}

TEST(IouLoss, Examples) {
    const std::vector<BoundingBox> gt{{0, 0, 10, 10}};
    EXPECT_NEAR(bbox_iou_loss(std::vector{person(0.8)}, 0.25, gt), 0.8, 1e-15);
    EXPECT_EQ(bbox_iou_loss(std::vector{person(0.8, {20, 20, 30, 30})}, 0.25, gt), 0.0);
    EXPECT_EQ(bbox_iou_loss(std::vector{person(0.8)}, 0.25, {}), 0.0);
    const std::vector<Detection> two{person(0.6, {0, 0, 10, 10}), person(0.9, {5, 0, 15, 10})};
    const std::vector<BoundingBox> gt2{{0, 0, 10, 10}, {5, 5, 15, 15}};
    EXPECT_NEAR(bbox_iou_loss(two, 0.25, gt2), pt::ref_iou_loss(two, 0.25, gt2), 1e-12);
}

TEST(Softplus, Examples) {
    EXPECT_NEAR(softplus(0.0), 0.693147180559945, 1e-12);
    const double tiny = softplus(-100.0);
    EXPECT_FALSE(std::isnan(tiny));
    EXPECT_GE(tiny, 0.0);
    EXPECT_LT(tiny, 1e-40);
    EXPECT_NEAR(softplus(100.0), 100.0, 1e-9);
    EXPECT_TRUE(std::isfinite(softplus(1e6)));
}

TEST(NmsLoss, Examples) {
    const std::vector<Detection> coincident{person(1.0), person(1.0)};
    EXPECT_NEAR(nms_disruption_loss(coincident, 20, 0.5), 0.974076984180107, 1e-12);
    EXPECT_EQ(nms_disruption_loss(std::vector{person(0.9)}, 20, 0.5), 0.0);
    Gen g(21);
    const auto five = g.detections(5);
    EXPECT_NEAR(nms_disruption_loss(five, 5, 0.5), pt::ref_nms_loss(five, 5, 0.5), 1e-12);
}

TEST(NmsLoss, TopKKeepsHighestConfidenceWithIndexTieBreak) {
    const std::vector<Detection> c{person(0.5), person(0.9), person(0.5), person(0.7)};
    EXPECT_EQ(top_k_indices(c, 3), (std::vector<std::size_t>{1, 3, 0}));
    EXPECT_EQ(top_k_indices(c, 10), (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(PatchStatistics, Examples) {
    const auto a = patch_statistics(Patch(4, 4, 0.5));
    EXPECT_EQ(a.mean, 0.5);
    EXPECT_EQ(a.stddev, 0.0);
    Patch half(2, 2);
    for (std::size_t i = 0; i < half.size(); ++i) half.values()[i] = i % 2 ? 1.0 : 0.0;
    const auto b = patch_statistics(half);
    EXPECT_NEAR(b.mean, 0.5, 1e-15);
    EXPECT_NEAR(b.stddev, 0.5, 1e-15);
    const auto c = patch_statistics(Patch(3, 3, 1.0));
    EXPECT_EQ(c.mean, 1.0);
    EXPECT_EQ(c.stddev, 0.0);
}

TEST(AppearanceLoss, Examples) {
    const AppearanceConfig cfg{0.1, 0.01};
    EXPECT_NEAR(appearance_loss(Patch(4, 4, 0.5), cfg), 0.1, 1e-15);
    EXPECT_NEAR(appearance_loss(Patch(4, 4, 1.0), cfg), 0.35, 1e-15);
    Patch checker(2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 3; ++c) checker.at(y, x, c) = (x + y) % 2;
    // 3 channels x 4 unit-squared differences each
    EXPECT_NEAR(smoothness_energy(checker), 12.0, 1e-15);
    EXPECT_NEAR(appearance_loss(checker, cfg), pt::ref_app_loss(checker, 0.1, 0.01), 1e-12);
    EXPECT_NEAR(appearance_loss(checker, cfg), 0.12, 1e-12);
}

TEST(AppearanceLoss, ConstantPatchHasFiniteGradient) {
    std::vector<double> grad(3 * 16, 0.0);
    appearance_loss(Patch(4, 4, 0.5), AppearanceConfig{0.1, 0.01}, grad);
    for (double v : grad) EXPECT_EQ(v, 0.0);
}

TEST(TotalLoss, Reductions) {
    Gen g(22);
    const auto c = g.detections(12);
    const std::vector<BoundingBox> gt{g.box(100.0), g.box(100.0)};
    const Patch p(4, 4, 0.3);
    const auto zero = total_loss(c, gt, p, LossWeights{0, 0, 0, 0}, AttackThresholds{}, AppearanceConfig{});
    EXPECT_EQ(zero.total, 0.0);
    const auto det_only = total_loss(c, gt, p, LossWeights{1, 0, 0, 0}, AttackThresholds{}, AppearanceConfig{});
    EXPECT_EQ(det_only.total, detection_confidence_loss(c, 0.25));
}

TEST(TotalLoss, FixtureMatchesHandAssembledSum) {
    const std::vector<Detection> c{person(0.9, {0, 0, 10, 20}), person(0.6, {2, 1, 12, 21}),
                                   {{30, 30, 40, 40}, "car", 0.95}};
    const std::vector<BoundingBox> gt{{0, 0, 10, 20}, {30, 30, 40, 40}};
    Patch p(2, 3);
    for (std::size_t i = 0; i < p.size(); ++i) p.values()[i] = 0.1 * static_cast<double>(i % 7);
    const LossWeights w{1.0, 1.0, 0.5, 0.1};
    const auto b = total_loss(c, gt, p, w, AttackThresholds{}, AppearanceConfig{});

    std::vector<Detection> persons{c[0], c[1]};
    const double det = pt::ref_det_loss(c, 0.25);
    const double iou_term = pt::ref_iou_loss(c, 0.25, gt);
    const double nms = pt::ref_nms_loss(persons, 20, 0.5);
    const double app = pt::ref_app_loss(p, 0.1, 0.01);
    EXPECT_NEAR(b.det, det, 1e-12);
    EXPECT_NEAR(b.iou, iou_term, 1e-12);
    EXPECT_NEAR(b.nms, nms, 1e-12);
    EXPECT_NEAR(b.app, app, 1e-12);
    EXPECT_NEAR(b.total, 1.0 * det + 1.0 * iou_term + 0.5 * nms + 0.1 * app, 1e-12);
}

TEST(Losses, AgreeWithBruteForceOnRandomFixtures) {
    Gen g(23);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = g.detections(g.integer(0, 50));
        std::vector<BoundingBox> gt;
        for (int i = g.integer(0, 10); i > 0; --i) gt.push_back(g.box(100.0));
        const double tau = g.uniform(0.0, 0.6);
        const std::size_t k = static_cast<std::size_t>(g.integer(2, 25));
        EXPECT_NEAR(detection_confidence_loss(c, tau), pt::ref_det_loss(c, tau), 1e-9);
        EXPECT_NEAR(bbox_iou_loss(c, tau, gt), pt::ref_iou_loss(c, tau, gt), 1e-9);
        EXPECT_NEAR(nms_disruption_loss(c, k, 0.5), pt::ref_nms_loss(c, k, 0.5), 1e-9);
    }
}

TEST(Losses, RangesHold) {
    Gen g(24);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = g.detections(g.integer(0, 40));
        const std::vector<BoundingBox> gt{g.box(100.0)};
        const double d = detection_confidence_loss(c, 0.25), i = bbox_iou_loss(c, 0.25, gt);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
        EXPECT_GE(i, 0.0);
        EXPECT_LE(i, 1.0);
        EXPECT_GE(nms_disruption_loss(c, 20, 0.5), 0.0);
        Patch p(3, 3);
        for (double& v : p.values()) v = g.uniform(0, 1);
        EXPECT_GE(appearance_loss(p, AppearanceConfig{}), 0.0);
    }
}

TEST(Losses, PermutationInvariant) {
    Gen g(25);
    for (int trial = 0; trial < 100; ++trial) {
        auto c = g.detections(g.integer(2, 30));
        const std::vector<BoundingBox> gt{g.box(100.0), g.box(100.0)};
        const auto before = detection_losses(c, gt, LossWeights{}, AttackThresholds{});
        std::shuffle(c.begin(), c.end(), g.engine());
        const auto after = detection_losses(c, gt, LossWeights{}, AttackThresholds{});
        EXPECT_NEAR(before.det, after.det, 1e-12);
        EXPECT_NEAR(before.iou, after.iou, 1e-12);
        EXPECT_NEAR(before.nms, after.nms, 1e-12);
    }
}

TEST(Losses, RaisingAPersonConfidenceNeverLowersDetectionLoss) {
    Gen g(26);
    for (int trial = 0; trial < 200; ++trial) {
        auto c = g.detections(g.integer(1, 20));
        const auto s = person_candidates(c, 0.25);
        if (s.empty()) continue;
        const double before = detection_confidence_loss(c, 0.25);
        auto& d = c[s[static_cast<std::size_t>(g.integer(0, static_cast<int>(s.size()) - 1))]];
        d.confidence = g.uniform(d.confidence, 1.0);
        EXPECT_GE(detection_confidence_loss(c, 0.25), before);
    }
}

TEST(Losses, OrderedPairAverageEqualsUnorderedAverage) {
    Gen g(27);
    for (int trial = 0; trial < 50; ++trial) {
        const auto c = g.detections(g.integer(2, 12));
        double sum = 0.0;
        int pairs = 0;
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t j = i + 1; j < c.size(); ++j) {
                sum += pt::ref_softplus(pt::ref_iou(c[i].box, c[j].box) - 0.5) * c[i].confidence * c[j].confidence;
                ++pairs;
            }
        EXPECT_NEAR(nms_disruption_loss(c, 20, 0.5), sum / pairs, 1e-12);
    }
}

class LossGradient : public ::testing::TestWithParam<int> {};

TEST_P(LossGradient, MatchesCentralDifferences) {
    Gen g(100 + static_cast<std::uint64_t>(GetParam()));
    const AttackThresholds th{0.25, 0.5, 6, 0.5};
    const LossWeights w{1.0, 1.0, 0.5, 0.0};
    int checked = 0;
    while (checked < 100) {
        auto c = g.detections(g.integer(2, 10), 60.0, 1.0);
        std::vector<BoundingBox> gt{g.box(60.0, 10.0, 30.0), g.box(60.0, 10.0, 30.0)};
        if (!pt::loss_smooth_region(c, gt, th.conf, th.top_k, 2e-3)) continue;
        ++checked;

        // term selects one loss at a time, then the weighted combination.
        for (int term = 0; term < 4; ++term) {
            const auto value = [&](const std::vector<Detection>& x, GradientSink sink) {
                switch (term) {
                    case 0: return detection_confidence_loss(x, th.conf, sink);
                    case 1: return bbox_iou_loss(x, th.conf, gt, sink);
                    case 2: return nms_disruption_loss(x, th.top_k, th.nms, sink);
                    default: return detection_losses(x, gt, w, th, sink).total;
                }
            };
            std::vector<CandidateGrad> grad(c.size());
            value(c, GradientSink{grad, 1.0});
            for (std::size_t k = 0; k < c.size() * 5; ++k) {
                const double base = param(c, k);
                const auto f = [&](double v) {
                    auto x = c;
                    param(x, k) = v;
                    return value(x, {});
                };
                const double fd = pt::central_difference(f, base, 1e-4);
                EXPECT_TRUE(pt::close_rel(grad_of(grad, k), fd, 1e-3, 1e-7))
                    << "term " << term << " param " << k << ": " << grad_of(grad, k) << " vs " << fd;
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradient, ::testing::Values(0, 1));

TEST(AppearanceGradient, MatchesCentralDifferences) {
    Gen g(28);
    for (int trial = 0; trial < 100; ++trial) {
        Patch p(g.integer(1, 5), g.integer(1, 5));
        // Narrow spread makes the sigma_min hinge active on some trials.
        const double spread = g.coin() ? 0.05 : 0.5;
        for (double& v : p.values()) v = 0.5 + g.uniform(-spread, spread);
        const AppearanceConfig cfg{g.uniform(0.0, 0.3), g.uniform(0.0, 0.1)};
        const double sd = patch_statistics(p).stddev;
        if (std::abs(sd - cfg.sigma_min) < 1e-3 || sd < 1e-3) continue;
        std::vector<double> grad(p.size(), 0.0);
        appearance_loss(p, cfg, grad, 1.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const auto f = [&](double v) {
                Patch q = p;
                q.values()[i] = v;
                return appearance_loss(q, cfg);
            };
            EXPECT_TRUE(pt::close_rel(grad[i], pt::central_difference(f, p.values()[i], 1e-4), 1e-3, 1e-7));
        }
    }
}
