#include <gtest/gtest.h>

#include <cmath>

#include "patchkit/dataset.hpp"
#include "patchkit/error.hpp"
#include "patchkit/optimizer.hpp"
#include "patchkit/toy_detector.hpp"
#include "patchkit/trainer.hpp"
#include "support/test_support.hpp"

using namespace patchkit;
namespace pt = patchkit::testing;

namespace {

Dataset small_dataset(int count = 4) {
    SyntheticConfig sc;
    sc.count = count;
    sc.width = 96;
    sc.height = 96;
    sc.targets_per_image = 1;
    sc.seed = 5;
    return generate_synthetic(sc, ToyDetectorParams::standard());
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.input_height = cfg.input_width = 96;
    cfg.patch_height = cfg.patch_width = 16;
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.placement.scale_fraction = 0.3;
    return cfg;
}

std::vector<BatchItem> batch_of(const Dataset& ds) {
    std::vector<BatchItem> out;
    for (std::size_t i = 0; i < ds.records.size(); ++i) out.push_back({&ds.records[i], i});
    return out;
}

}  // namespace

TEST(InitPatch, GrayIsHalfEverywhere) {
    const Patch p = init_patch(4, 6, PatchInit::Gray, 1);
    EXPECT_EQ(p.height(), 4);
    EXPECT_EQ(p.width(), 6);
    for (double v : p.values()) EXPECT_EQ(v, 0.5);
}

TEST(InitPatch, UniformIsSeededFloatRoundedAndInRange) {
    const Patch a = init_patch(8, 8, PatchInit::UniformRandom, 3);
    const Patch b = init_patch(8, 8, PatchInit::UniformRandom, 3);
    const Patch c = init_patch(8, 8, PatchInit::UniformRandom, 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    for (double v : a.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
    }
}

TEST(InitPatch, ParsesNamesAndRejectsBadInput) {
    EXPECT_EQ(parse_patch_init("gray"), PatchInit::Gray);
    EXPECT_EQ(parse_patch_init("uniform-random"), PatchInit::UniformRandom);
    EXPECT_THROW(parse_patch_init("zeros"), InvalidArgument);
    EXPECT_THROW(init_patch(0, 4, PatchInit::Gray, 1), InvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
    std::vector<double> x{0.5, 0.5, 0.5, 0.5};
    const std::vector<double> g{2.0, -0.001, 0.0, 300.0};
    AdamMoments m;
    adam_step(x, g, m, 0.01);
    // Bias-corrected m/sqrt(v) is g/|g| on the first step.
    EXPECT_NEAR(x[0], 0.49, 1e-8);
    EXPECT_NEAR(x[1], 0.51, 1e-5);
    EXPECT_EQ(x[2], 0.5);
    EXPECT_NEAR(x[3], 0.49, 1e-8);
    EXPECT_EQ(m.steps, 1u);
}

TEST(Adam, MatchesHandRolledRecurrence) {
    pt::Gen g(8);
    std::vector<double> x(5), ref(5), m1(5, 0.0), m2(5, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) ref[i] = x[i] = g.uniform(0, 1);
    AdamMoments m;
    const AdamConfig cfg{0.8, 0.95, 1e-6};
    for (int step = 1; step <= 20; ++step) {
        std::vector<double> grad(5);
        for (double& v : grad) v = g.uniform(-1, 1);
        adam_step(x, grad, m, 0.05, cfg);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            m1[i] = 0.8 * m1[i] + 0.2 * grad[i];
            m2[i] = 0.95 * m2[i] + 0.05 * grad[i] * grad[i];
            const double mh = m1[i] / (1 - std::pow(0.8, step)), vh = m2[i] / (1 - std::pow(0.95, step));
            ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-6);
        }
    }
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], ref[i], 1e-12);
}

TEST(ProjectPatch, ClampsAndRoundsToFloat) {
    Patch p(1, 2);
    p.values()[0] = -0.3;
    p.values()[1] = 0.1;
    p.values()[2] = 1.7;
    p.values()[3] = 1.0 / 3.0;
    p.values()[4] = 1.0;
    p.values()[5] = 0.0;
    project_patch(p);
    EXPECT_EQ(p.values()[0], 0.0);
    EXPECT_EQ(p.values()[1], static_cast<double>(0.1f));
    EXPECT_EQ(p.values()[2], 1.0);
    EXPECT_EQ(p.values()[3], static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST(TrainStep, ZeroWeightsLeavePatchUnchanged) {
    const auto ds = small_dataset(2);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    cfg.weights = {0.0, 0.0, 0.0, 0.0};
    TrainState st{init_patch(16, 16, PatchInit::UniformRandom, 1), 0, {}, {}};
    const Patch before = st.patch;
    const auto items = batch_of(ds);
    train_step(st, items, det, cfg, 0);
    EXPECT_EQ(st.patch, before);
    EXPECT_EQ(st.step, 1u);
}

TEST(TrainStep, AppearanceOnlyOnGrayPatchReportsSigmaMin) {
    const auto ds = small_dataset(2);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    cfg.weights = {0.0, 0.0, 0.0, 1.0};
    TrainState st{init_patch(16, 16, PatchInit::Gray, 1), 0, {}, {}};
    const auto items = batch_of(ds);
    const auto loss = train_step(st, items, det, cfg, 0);
    EXPECT_NEAR(loss.app, cfg.appearance.sigma_min, 1e-12);
    EXPECT_NEAR(loss.total, cfg.appearance.sigma_min, 1e-12);
}

TEST(TrainStep, RejectsNonFinitePatch) {
    const auto ds = small_dataset(1);
    const ToyDetector det(ToyDetectorParams::standard());
    TrainState st{init_patch(16, 16, PatchInit::Gray, 1), 0, {}, {}};
    st.patch.values()[3] = std::nan("");
    const auto items = batch_of(ds);
    EXPECT_THROW(train_step(st, items, det, small_config(), 0), Error);
}

TEST(EvaluateBatch, GradientMatchesFiniteDifferencesThroughPipeline) {
    const auto ds = small_dataset(2);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    cfg.weights = {1.0, 1.0, 0.5, 0.1};
    const Patch patch = init_patch(16, 16, PatchInit::UniformRandom, 9);
    const auto items = batch_of(ds);
    const auto base = evaluate_batch(patch, items, det, cfg, 0);

    int checked = 0;
    for (std::size_t i = 0; i < patch.size() && checked < 10; i += 37) {
        if (std::abs(base.gradient.values()[i]) < 1e-6) continue;
        const auto f = [&](double v) {
            Patch p = patch;
            p.values()[i] = v;
            return evaluate_batch(p, items, det, cfg, 0).loss.total;
        };
        const double fd = pt::central_difference(f, patch.values()[i], 1e-6);
        EXPECT_TRUE(pt::close_rel(base.gradient.values()[i], fd, 1e-2, 1e-7))
            << "pixel " << i << ": " << base.gradient.values()[i] << " vs " << fd;
        ++checked;
    }
    EXPECT_EQ(checked, 10);
}

TEST(EvaluateBatch, JobsDoNotChangeResult) {
    const auto ds = small_dataset(4);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    const Patch patch = init_patch(16, 16, PatchInit::UniformRandom, 2);
    const auto items = batch_of(ds);
    const auto a = evaluate_batch(patch, items, det, cfg, 1);
    cfg.jobs = 3;
    const auto b = evaluate_batch(patch, items, det, cfg, 1);
    EXPECT_EQ(a.loss.total, b.loss.total);
    EXPECT_EQ(a.gradient, b.gradient);
}

TEST(Train, HistoryLengthIsEpochsTimesBatches) {
    const auto ds = small_dataset(5);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    cfg.epochs = 3;
    cfg.batch_size = 2;
    std::size_t observed = 0;
    const auto r = train(ds, det, cfg, [&](const TrainState&, std::uint64_t) { ++observed; });
    EXPECT_EQ(r.history.size(), 9u);
    EXPECT_EQ(observed, 9u);
    EXPECT_EQ(epoch_mean_totals(r.history, 3).size(), 3u);
}

TEST(Train, SameSeedSameResult) {
    const auto ds = small_dataset(4);
    const ToyDetector det(ToyDetectorParams::standard());
    const auto cfg = small_config();
    const auto a = train(ds, det, cfg);
    const auto b = train(ds, det, cfg);
    EXPECT_EQ(a.patch, b.patch);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].total, b.history[i].total);
}

TEST(Train, TinyLearningRateBarelyMoves) {
    const auto ds = small_dataset(2);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    cfg.learning_rate = 1e-9;
    const auto r = train(ds, det, cfg);
    for (double v : r.patch.values()) EXPECT_NEAR(v, 0.5, 1e-7);
}

TEST(Train, RejectsBadConfigAndEmptyDataset) {
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    EXPECT_THROW(train(Dataset{}, det, cfg), InvalidArgument);
    cfg.epochs = -1;
    EXPECT_THROW(train(small_dataset(1), det, cfg), InvalidArgument);
    cfg = small_config();
    cfg.patch_height = 200;
    EXPECT_THROW(train(small_dataset(1), det, cfg), InvalidArgument);
}

TEST(Train, WritesCheckpoints) {
    const auto dir = pt::scratch_dir("checkpoints");
    const auto ds = small_dataset(4);
    const ToyDetector det(ToyDetectorParams::standard());
    auto cfg = small_config();
    cfg.checkpoint_every = 2;
    cfg.checkpoint_dir = dir;
    train(ds, det, cfg);
    EXPECT_TRUE(std::filesystem::exists(dir / "step_2.tpch"));
    EXPECT_TRUE(std::filesystem::exists(dir / "step_4.tpch"));
    EXPECT_TRUE(std::filesystem::exists(dir / "step_2.json"));
}
