#include <gtest/gtest.h>

#include <algorithm>

#include "patchkit/dataset.hpp"
#include "patchkit/evaluation.hpp"
#include "patchkit/experiments.hpp"
#include "patchkit/toy_detector.hpp"
#include "support/test_support.hpp"

using namespace patchkit;
namespace pt = patchkit::testing;

namespace {

using Dets = std::vector<std::vector<Detection>>;
using Gts = std::vector<std::vector<BoundingBox>>;

Detection person(BoundingBox b, double c) { return {b, kPersonLabel, c}; }

// Textbook all-point interpolated AP: build the PR table rank by rank, then for
// every recall step take the best precision at any later rank.
double oracle_ap(const Dets& dets, const Gts& gts, double iou_thr, double tau) {
    struct R {
        double c;
        std::size_t img, k;
    };
    std::vector<R> rs;
    std::size_t n_gt = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) n_gt += gts[i].size();
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (std::size_t k = 0; k < dets[i].size(); ++k)
            if (dets[i][k].label == "person" && dets[i][k].confidence > tau) rs.push_back({dets[i][k].confidence, i, k});
    std::stable_sort(rs.begin(), rs.end(), [](const R& a, const R& b) { return a.c > b.c; });
    std::vector<std::vector<int>> used(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].size(), 0);
    std::vector<double> prec, rec;
    int tp = 0;
    for (std::size_t r = 0; r < rs.size(); ++r) {
        const auto& box = dets[rs[r].img][rs[r].k].box;
        int best = -1;
        double best_v = 0;
        for (std::size_t g = 0; g < gts[rs[r].img].size(); ++g) {
            const double v = pt::ref_iou(box, gts[rs[r].img][g]);
            if (!used[rs[r].img][g] && v >= iou_thr && (best < 0 || v > best_v)) {
                best = static_cast<int>(g);
                best_v = v;
            }
        }
        if (best >= 0) {
            used[rs[r].img][static_cast<std::size_t>(best)] = 1;
            ++tp;
        }
        prec.push_back(double(tp) / double(r + 1));
        rec.push_back(double(tp) / double(n_gt));
    }
    double ap = 0, prev_rec = 0;
    for (std::size_t r = 0; r < rs.size(); ++r) {
        if (rec[r] == prev_rec) continue;
        double best_p = 0;
        for (std::size_t j = r; j < rs.size(); ++j) best_p = std::max(best_p, prec[j]);
        ap += (rec[r] - prev_rec) * best_p;
        prev_rec = rec[r];
    }
    return 100.0 * ap;
}

Dataset scenes(int count, int targets = 1) {
    SyntheticConfig sc;
    sc.count = count;
    sc.width = sc.height = 96;
    sc.targets_per_image = targets;
    sc.seed = 11;
    return generate_synthetic(sc, ToyDetectorParams::standard());
}

class ThrowingDetector : public Detector {
public:
    std::string name() const override { return "broken"; }
    DetectorOutput detect(const SceneImage&) override { throw Error("detector unavailable"); }
};

}  // namespace

TEST(AveragePrecision, PerfectDetectionIs100) {
    const Gts gts{{{0, 0, 10, 10}}};
    const Dets dets{{person({0, 0, 10, 10}, 0.9)}};
    EXPECT_DOUBLE_EQ(average_precision(dets, gts, {}).ap, 100.0);
}

TEST(AveragePrecision, FalsePositiveRankedFirstGivesFifty) {
    const Gts gts{{{0, 0, 10, 10}}};
    const Dets dets{{person({50, 50, 60, 60}, 0.9), person({0, 0, 10, 10}, 0.8)}};
    const auto r = average_precision(dets, gts, {});
    EXPECT_DOUBLE_EQ(r.ap, 50.0);
    EXPECT_EQ(r.per_image[0].matched, 1u);
    EXPECT_EQ(r.per_image[0].false_positives, 1u);
}

TEST(AveragePrecision, OneOfTwoImagesMissedGivesFifty) {
    const Gts gts{{{0, 0, 10, 10}}, {{0, 0, 10, 10}}};
    const Dets dets{{person({0, 0, 10, 10}, 0.9)}, {}};
    EXPECT_DOUBLE_EQ(average_precision(dets, gts, {}).ap, 50.0);
}

TEST(AveragePrecision, IgnoresOtherLabelsAndLowConfidence) {
    const Gts gts{{{0, 0, 10, 10}}};
    const Dets dets{{{{50, 50, 60, 60}, "car", 0.99}, person({60, 60, 70, 70}, 0.4), person({0, 0, 10, 10}, 0.8)}};
    EXPECT_DOUBLE_EQ(average_precision(dets, gts, {}).ap, 100.0);
}

TEST(AveragePrecision, EmptyGroundTruthThrows) {
    const Gts gts{{}};
    const Dets dets{{person({0, 0, 10, 10}, 0.9)}};
    EXPECT_THROW(average_precision(dets, gts, {}), NoPseudoGroundTruth);
}

TEST(AveragePrecision, MatchesTextbookOracleOnRandomCases) {
    pt::Gen g(61);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n_img = static_cast<std::size_t>(g.integer(1, 3));
        Gts gts(n_img);
        Dets dets(n_img);
        std::size_t n_gt = 0, n_det = 0;
        for (std::size_t i = 0; i < n_img; ++i) {
            for (int k = g.integer(0, 3); k > 0; --k) gts[i].push_back(g.box(60.0, 8.0, 25.0));
            n_gt += gts[i].size();
            for (int k = g.integer(0, 7); k > 0 && n_det < 20; --k, ++n_det) {
                // Half near a GT box, half anywhere.
                if (!gts[i].empty() && g.coin()) {
                    const auto& b = gts[i][static_cast<std::size_t>(g.integer(0, int(gts[i].size()) - 1))];
                    const double j = 4;
                    dets[i].push_back(person({b.x1 + g.uniform(-j, j), b.y1 + g.uniform(-j, j), b.x2 + g.uniform(-j, j),
                                              b.y2 + g.uniform(-j, j)},
                                             g.uniform(0, 1)));
                } else {
                    dets[i].push_back(person(g.box(60.0, 8.0, 25.0), g.uniform(0, 1)));
                }
            }
        }
        if (n_gt == 0) continue;
        EvalProtocol proto;
        proto.tau_det = g.uniform(0.0, 0.5);
        proto.iou_match_threshold = g.uniform(0.3, 0.7);
        const double ap = average_precision(dets, gts, proto).ap;
        EXPECT_NEAR(ap, oracle_ap(dets, gts, proto.iou_match_threshold, proto.tau_det), 1e-9);
        EXPECT_GE(ap, 0.0);
        EXPECT_LE(ap, 100.0);
    }
}

TEST(AveragePrecision, InvariantToDetectionOrderWithinImage) {
    pt::Gen g(62);
    for (int trial = 0; trial < 200; ++trial) {
        Gts gts{{g.box(60, 8, 25), g.box(60, 8, 25)}};
        Dets dets(1);
        for (int k = 0; k < 8; ++k) dets[0].push_back(person(g.box(60, 8, 25), g.uniform(0, 1)));
        const double a = average_precision(dets, gts, {}).ap;
        std::shuffle(dets[0].begin(), dets[0].end(), g.engine());
        EXPECT_DOUBLE_EQ(average_precision(dets, gts, {}).ap, a);
    }
}

TEST(AveragePrecision, AddingAPerfectTopDetectionNeverLowersAp) {
    pt::Gen g(63);
    for (int trial = 0; trial < 200; ++trial) {
        Gts gts{{g.box(60, 8, 25), g.box(60, 8, 25)}};
        Dets dets(1);
        for (int k = 0; k < 6; ++k) dets[0].push_back(person(g.box(60, 8, 25), g.uniform(0.5, 0.99)));
        const double before = average_precision(dets, gts, {}).ap;
        Dets more = dets;
        more[0].insert(more[0].begin(), person(gts[0][0], 1.0));
        EXPECT_GE(average_precision(more, gts, {}).ap + 1e-9, before) << trial;
    }
}

TEST(AttackSuccessRate, Examples) {
    const Gts gts{{{0, 0, 10, 10}, {20, 20, 30, 30}}};
    EXPECT_DOUBLE_EQ(attack_success_rate(gts, Dets{{}}, {}), 1.0);
    EXPECT_DOUBLE_EQ(attack_success_rate(gts, Dets{{person({0, 0, 10, 10}, 0.9)}}, {}), 0.5);
    EXPECT_DOUBLE_EQ(attack_success_rate(gts, Dets{{person({0, 0, 10, 10}, 0.4)}}, {}), 1.0);
    // A single detection may cover several pseudo-GT boxes.
    const Gts twin{{{0, 0, 10, 10}, {0, 0, 10, 10}}};
    EXPECT_DOUBLE_EQ(attack_success_rate(twin, Dets{{person({0, 0, 10, 10}, 0.9)}}, {}), 0.0);
    EXPECT_THROW(attack_success_rate(Gts{{}}, Dets{{}}, {}), NoPseudoGroundTruth);
}

TEST(AttackSuccessRate, ComplementsMatchedFraction) {
    pt::Gen g(64);
    for (int trial = 0; trial < 300; ++trial) {
        Gts gts{{}};
        for (int k = g.integer(1, 5); k > 0; --k) gts[0].push_back(g.box(60, 8, 25));
        Dets dets{{}};
        for (int k = g.integer(0, 6); k > 0; --k) dets[0].push_back(person(g.box(60, 8, 25), g.uniform(0, 1)));
        std::size_t matched = 0;
        for (const auto& b : gts[0]) {
            bool hit = false;
            for (const auto& d : dets[0]) hit = hit || (d.confidence > 0.5 && pt::ref_iou(d.box, b) >= 0.5);
            matched += hit;
        }
        EXPECT_NEAR(attack_success_rate(gts, dets, {}) + double(matched) / double(gts[0].size()), 1.0, 1e-12);
    }
}

TEST(PseudoGroundTruth, KeepsConfidentPersonsAndListsExcluded) {
    const std::vector<DetectorOutput> outs{
        {{person({0, 0, 5, 5}, 0.9), {{0, 0, 5, 5}, "car", 0.9}, person({1, 1, 6, 6}, 0.5)}}, {}};
    const auto gt = pseudo_ground_truth_from(outs, {});
    EXPECT_EQ(gt.total(), 1u);
    EXPECT_EQ(gt.excluded, std::vector<std::size_t>{1});
}

TEST(EvaluatePatch, CleanAgainstCleanIsPerfect) {
    const auto ds = scenes(3);
    ToyEvalDetector det("toy", ToyDetectorParams::standard(), AttackThresholds{});
    const auto r = evaluate_patch(det, ds.records, nullptr, PlacementSpec{}, {});
    ASSERT_TRUE(r.ap_person.has_value());
    EXPECT_DOUBLE_EQ(*r.ap_person, 100.0);
    EXPECT_DOUBLE_EQ(r.asr, 0.0);
    ASSERT_EQ(r.per_image.size(), 3u);
    EXPECT_EQ(r.per_image[0].image_id, ds.records[0].id);
}

TEST(EvaluatePatch, NoTargetsMeansNoPseudoGroundTruth) {
    const auto ds = scenes(2, 0);
    ToyEvalDetector det("toy", ToyDetectorParams::standard(), AttackThresholds{});
    const auto r = evaluate_patch(det, ds.records, nullptr, PlacementSpec{}, {});
    EXPECT_TRUE(r.no_pseudo_gt);
    EXPECT_FALSE(r.ap_person.has_value());
}

TEST(EvaluatePatch, JobsDoNotChangeReport) {
    const auto ds = scenes(3);
    ToyEvalDetector det("toy", ToyDetectorParams::standard(), AttackThresholds{});
    const Patch p = init_patch(16, 16, PatchInit::UniformRandom, 4);
    const auto a = evaluate_patch(det, ds.records, &p, PlacementSpec{}, {}, 1);
    const auto b = evaluate_patch(det, ds.records, &p, PlacementSpec{}, {}, 3);
    EXPECT_EQ(a.ap_person, b.ap_person);
    EXPECT_EQ(a.asr, b.asr);
}

TEST(TransferMatrix, SingleCellEqualsEvaluatePatch) {
    const auto ds = scenes(3);
    ToyEvalDetector det("toy", ToyDetectorParams::standard(), AttackThresholds{});
    const Patch p = init_patch(16, 16, PatchInit::UniformRandom, 5);
    PlacementSpec spec;
    spec.scale_fraction = 0.4;
    const auto m = transfer_matrix({{"toy", p}}, {{"toy", &det}}, ds.records, spec, {});
    const auto direct = evaluate_patch(det, ds.records, &p, spec, {});
    ASSERT_EQ(m.cells.size(), 1u);
    ASSERT_EQ(m.cells[0].size(), 1u);
    EXPECT_EQ(m.cells[0][0].ap_person, direct.ap_person);
    EXPECT_EQ(m.computed_cells(), 1u);
}

TEST(TransferMatrix, FailingVictimMarksCellsUnavailable) {
    const auto ds = scenes(2);
    ToyEvalDetector good("toy", ToyDetectorParams::standard(), AttackThresholds{});
    ThrowingDetector bad;
    const Patch p(16, 16, 0.5);
    const auto m = transfer_matrix({{"a", p}, {"b", p}}, {{"broken", &bad}, {"toy", &good}}, ds.records, {}, {});
    EXPECT_EQ(m.victims, (std::vector<std::string>{"broken", "toy"}));
    EXPECT_EQ(m.computed_cells(), 2u);
    for (const auto& row : m.cells) {
        EXPECT_FALSE(row[0].ap_person.has_value());
        EXPECT_FALSE(row[0].error.empty());
        EXPECT_TRUE(row[1].ap_person.has_value());
    }
}

TEST(SeedStability, NeedsTwoSeedsAndRepeatsExactly) {
    const auto ds = scenes(2);
    const ToyDetector train_det(ToyDetectorParams::standard());
    ToyEvalDetector victim("toy", ToyDetectorParams::standard(), AttackThresholds{});
    TrainConfig cfg;
    cfg.input_height = cfg.input_width = 96;
    cfg.patch_height = cfg.patch_width = 16;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    const std::vector<std::uint64_t> one{42}, same{42, 42};
    EXPECT_THROW(seed_stability(ds, train_det, victim, cfg, one, {}), InvalidArgument);
    const auto s = seed_stability(ds, train_det, victim, cfg, same, {});
    ASSERT_EQ(s.runs.size(), 2u);
    EXPECT_EQ(s.runs[0].patch, s.runs[1].patch);
    EXPECT_EQ(s.runs[0].ap_person, s.runs[1].ap_person);
    EXPECT_EQ(s.spread, 0.0);
}

TEST(Ablation, LossTermMasksCoverAllNonEmptySubsets) {
    const auto masks = loss_term_masks();
    ASSERT_EQ(masks.size(), 7u);
    for (const auto& m : masks) EXPECT_TRUE(m[0] || m[1] || m[2]);
    const auto pts = ablation_points(AblationAxis::LossTerms, TrainConfig{}, AblationGrid{});
    EXPECT_EQ(pts.size(), 7u);
    EXPECT_EQ(ablation_points(AblationAxis::Epochs, TrainConfig{}, AblationGrid{}).size(), 3u);
    EXPECT_THROW(parse_ablation_axis("colour"), InvalidArgument);
    EXPECT_EQ(parse_ablation_axis("patch-size"), AblationAxis::PatchSize);
}
