#include <benchmark/benchmark.h>

#include <random>

#include "patchkit/compositor.hpp"
#include "patchkit/dataset.hpp"
#include "patchkit/losses.hpp"
#include "patchkit/nms.hpp"
#include "patchkit/toy_detector.hpp"
#include "patchkit/trainer.hpp"

using namespace patchkit;

namespace {

std::vector<Detection> random_candidates(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = 150 * u(rng), y = 150 * u(rng), w = 10 + 40 * u(rng), h = 10 + 40 * u(rng);
        out.push_back({{x, y, x + w, y + h}, u(rng) < 0.8 ? kPersonLabel : "car", u(rng)});
    }
    return out;
}

SceneImage noise_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SceneImage img(h, w);
    for (double& v : img.values()) v = u(rng);
    return img;
}

void BM_PairwiseIou(benchmark::State& state) {
    const auto c = random_candidates(static_cast<std::size_t>(state.range(0)), 1);
    std::vector<BoundingBox> boxes;
    for (const auto& d : c) boxes.push_back(d.box);
    for (auto _ : state) benchmark::DoNotOptimize(pairwise_iou(boxes));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PairwiseIou)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_GreedyNms(benchmark::State& state) {
    const auto c = random_candidates(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(greedy_nms(c, 0.5, 0.25));
}
BENCHMARK(BM_GreedyNms)->RangeMultiplier(4)->Range(16, 1024);

void BM_DetectionLosses(benchmark::State& state) {
    const auto c = random_candidates(static_cast<std::size_t>(state.range(0)), 3);
    const std::vector<BoundingBox> gt{{10, 10, 60, 90}, {100, 40, 150, 140}};
    std::vector<CandidateGrad> grad(c.size());
    for (auto _ : state) {
        benchmark::DoNotOptimize(detection_losses(c, gt, LossWeights{}, AttackThresholds{}, GradientSink{grad, 1.0}));
    }
}
BENCHMARK(BM_DetectionLosses)->RangeMultiplier(4)->Range(16, 1024);

void BM_ApplyPatch(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const SceneImage img = noise_image(192, 192, 4);
    const Patch patch(n, n, 0.5);
    PlacementSpec spec;
    spec.rotation = 0.2;
    const std::vector<BoundingBox> boxes{{20, 20, 84, 84}, {100, 100, 164, 164}};
    for (auto _ : state) benchmark::DoNotOptimize(apply_to_all_persons(img, patch, boxes, spec));
}
BENCHMARK(BM_ApplyPatch)->Arg(16)->Arg(32)->Arg(128);

void BM_ToyForward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ToyDetector det(ToyDetectorParams::standard());
    const SceneImage img = noise_image(n, n, 5);
    for (auto _ : state) benchmark::DoNotOptimize(det.forward(img));
}
BENCHMARK(BM_ToyForward)->Arg(96)->Arg(192)->Arg(384);

void BM_ToyBackward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ToyDetector det(ToyDetectorParams::standard());
    const SceneImage img = noise_image(n, n, 6);
    const auto raw = det.forward(img);
    std::vector<CandidateGrad> up(raw.detections.size(), CandidateGrad{0.1, {0.01, 0.01, 0.01, 0.01}});
    for (auto _ : state) benchmark::DoNotOptimize(det.backward(img, raw, up));
}
BENCHMARK(BM_ToyBackward)->Arg(96)->Arg(192)->Arg(384);

void BM_TrainStep(benchmark::State& state) {
    SyntheticConfig sc;
    sc.count = 8;
    const auto ds = generate_synthetic(sc, ToyDetectorParams::standard());
    const ToyDetector det(ToyDetectorParams::standard());
    TrainConfig cfg;
    cfg.input_height = cfg.input_width = 192;
    cfg.patch_height = cfg.patch_width = 32;
    std::vector<BatchItem> batch;
    for (std::size_t i = 0; i < ds.records.size(); ++i) batch.push_back({&ds.records[i], i});
    TrainState st{Patch(32, 32, 0.5), 0, {}, {}};
    for (auto _ : state) benchmark::DoNotOptimize(train_step(st, batch, det, cfg, 0));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
