#include "patchkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "patchkit/error.hpp"
#include "patchkit/parallel.hpp"
#include "patchkit/patch_io.hpp"

namespace patchkit {

namespace {

constexpr std::uint64_t kShuffleStream = 0xfffffffffffffffeull;

struct ItemResult {
    LossBreakdown loss;
    RgbImage patch_grad;
};

bool all_zero(const CandidateGrad& g) {
    return g.confidence == 0.0 && g.box[0] == 0.0 && g.box[1] == 0.0 && g.box[2] == 0.0 && g.box[3] == 0.0;
}

ItemResult evaluate_item(const Patch& patch, const BatchItem& item, const DifferentiableDetector& detector,
                         const TrainConfig& cfg, std::uint64_t epoch) {
    const SceneRecord& scene = *item.scene;
    SceneImage image;
    std::vector<BoundingBox> boxes;
    if (scene.image.height() == cfg.input_height && scene.image.width() == cfg.input_width) {
        image = scene.image;
        boxes = scene.person_boxes;
    } else {
        image = resize_bilinear(scene.image, cfg.input_height, cfg.input_width);
        for (const auto& b : scene.person_boxes)
            boxes.push_back(scale_box(b, scene.image.height(), scene.image.width(), cfg.input_height, cfg.input_width));
    }

    const Composite composite = apply_to_all_persons(image, patch, boxes, cfg.placement);

    ItemResult result{{}, RgbImage(patch.height(), patch.width())};
    const int draws = cfg.augment ? cfg.augmentation.draws_per_image : 1;
    const double share = 1.0 / draws;
    Rng rng = make_substream(cfg.seed, epoch, item.index);

    for (int d = 0; d < draws; ++d) {
        const AugmentDraw draw =
            cfg.augment ? sample_augmentation(cfg.augmentation, rng, image.height(), image.width()) : AugmentDraw{};
        AugmentTrace trace;
        const SceneImage seen = augment(composite.image, draw, &trace);

        std::vector<BoundingBox> seen_boxes;
        seen_boxes.reserve(boxes.size());
        for (const auto& b : boxes) seen_boxes.push_back(transform_box(b, draw.transform, seen.height(), seen.width()));

        const RawCandidates raw = detector.forward(seen);
        std::vector<CandidateGrad> grads(raw.detections.size());
        const LossBreakdown b =
            detection_losses(raw.detections, seen_boxes, cfg.weights, cfg.thresholds, GradientSink{grads, share});
        result.loss.det += share * b.det;
        result.loss.iou += share * b.iou;
        result.loss.nms += share * b.nms;

        if (std::all_of(grads.begin(), grads.end(), all_zero)) continue;
        const RgbImage seen_grad = detector.backward(seen, raw, grads);
        const RgbImage composite_grad = augment_backward(trace, seen_grad);
        composite_backward(composite, composite_grad, result.patch_grad);
    }
    return result;
}

void require_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + term + " loss");
}

void write_checkpoint(const TrainState& state, std::uint64_t epoch, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string stem = "step_" + std::to_string(state.step);
    save_patch(dir / (stem + ".tpch"), state.patch);

    const auto norm = [](const std::vector<double>& v) {
        return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    };
    nlohmann::json tail = nlohmann::json::array();
    const std::size_t from = state.history.size() > 10 ? state.history.size() - 10 : 0;
    for (std::size_t i = from; i < state.history.size(); ++i) {
        const auto& b = state.history[i];
        tail.push_back({{"step", i + 1}, {"det", b.det}, {"iou", b.iou}, {"nms", b.nms}, {"app", b.app}, {"total", b.total}});
    }
    const nlohmann::json doc{{"step", state.step},
                             {"epoch", epoch},
                             {"moment_norms", {{"first", norm(state.moments.first)}, {"second", norm(state.moments.second)}}},
                             {"loss_history_tail", tail}};
    std::ofstream(dir / (stem + ".json")) << doc.dump(2) << "\n";
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("train.learning_rate must be > 0");
    if (batch_size < 1) throw InvalidArgument("train.batch_size must be >= 1");
    if (epochs < 1) throw InvalidArgument("train.epochs must be >= 1");
    if (input_height < 1 || input_width < 1) throw InvalidArgument("train.input_resolution must be >= 1");
    if (patch_height < 1 || patch_width < 1) throw InvalidArgument("train.patch_resolution must be >= 1");
    if (patch_height >= input_height || patch_width >= input_width)
        throw InvalidArgument("train.patch_resolution must be smaller than train.input_resolution");
    if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
    if (checkpoint_every < 0) throw InvalidArgument("train.checkpoint_every must be >= 0");
    if (checkpoint_every > 0 && checkpoint_dir.empty())
        throw InvalidArgument("train.checkpoint_every needs a checkpoint directory");
    weights.validate();
    thresholds.validate();
    appearance.validate();
    augmentation.validate();
    placement.validate();
}

BatchObjective evaluate_batch(const Patch& patch, std::span<const BatchItem> batch,
                              const DifferentiableDetector& detector, const TrainConfig& cfg, std::uint64_t epoch) {
    if (batch.empty()) throw InvalidArgument("batch must not be empty");
    std::vector<ItemResult> items(batch.size());
    parallel_for(batch.size(), cfg.jobs,
                 [&](std::size_t i) { items[i] = evaluate_item(patch, batch[i], detector, cfg, epoch); });

    BatchObjective out{{}, RgbImage(patch.height(), patch.width())};
    const double inv = 1.0 / static_cast<double>(batch.size());
    auto g = out.gradient.values();
    for (const ItemResult& r : items) {
        out.loss.det += r.loss.det;
        out.loss.iou += r.loss.iou;
        out.loss.nms += r.loss.nms;
        const auto pg = r.patch_grad.values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += pg[k];
    }
    out.loss.det *= inv;
    out.loss.iou *= inv;
    out.loss.nms *= inv;
    for (double& v : g) v *= inv;

    out.loss.app = appearance_loss(patch, cfg.appearance,
                                   cfg.weights.app > 0.0 ? g : std::span<double>{}, cfg.weights.app);
    out.loss.total = weighted_total(out.loss, cfg.weights);
    return out;
}

LossBreakdown train_step(TrainState& state, std::span<const BatchItem> batch, const DifferentiableDetector& detector,
                         const TrainConfig& cfg, std::uint64_t epoch) {
    BatchObjective obj = evaluate_batch(state.patch, batch, detector, cfg, epoch);
    require_finite(obj.loss.det, "detection-confidence");
    require_finite(obj.loss.iou, "bbox-iou");
    require_finite(obj.loss.nms, "nms-disruption");
    require_finite(obj.loss.app, "appearance");
    require_finite(obj.loss.total, "total");
    for (double v : obj.gradient.values())
        if (!std::isfinite(v)) throw TrainingError("non-finite patch gradient");

    adam_step(state.patch.values(), obj.gradient.values(), state.moments, cfg.learning_rate, cfg.adam);
    project_patch(state.patch);
    ++state.step;
    state.history.push_back(obj.loss);
    return obj.loss;
}

TrainResult train(const Dataset& dataset, const DifferentiableDetector& detector, const TrainConfig& cfg,
                  const StepObserver& observer) {
    cfg.validate();
    if (dataset.records.empty()) throw InvalidArgument("dataset has 0 records");

    Dataset resized;
    const bool fits = std::all_of(dataset.records.begin(), dataset.records.end(), [&](const SceneRecord& r) {
        return r.image.height() == cfg.input_height && r.image.width() == cfg.input_width;
    });
    if (!fits) resized = resize_dataset(dataset, cfg.input_height, cfg.input_width);
    const auto& records = fits ? dataset.records : resized.records;

    TrainState state;
    state.patch = init_patch(cfg.patch_height, cfg.patch_width, cfg.init, cfg.seed);

    const std::size_t n = records.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<BatchItem> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = make_substream(cfg.seed, static_cast<std::uint64_t>(epoch), kShuffleStream);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t start = 0; start < n; start += bs) {
            batch.clear();
            for (std::size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back({&records[order[i]], order[i]});
            train_step(state, batch, detector, cfg, static_cast<std::uint64_t>(epoch));
            if (cfg.checkpoint_every > 0 && state.step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0)
                write_checkpoint(state, static_cast<std::uint64_t>(epoch), cfg.checkpoint_dir);
            if (observer) observer(state, static_cast<std::uint64_t>(epoch));
        }
    }
    return {std::move(state.patch), std::move(state.history)};
}

std::vector<double> epoch_mean_totals(std::span<const LossBreakdown> history, std::size_t steps_per_epoch) {
    std::vector<double> out;
    if (steps_per_epoch == 0) return out;
    for (std::size_t start = 0; start < history.size(); start += steps_per_epoch) {
        const std::size_t end = std::min(history.size(), start + steps_per_epoch);
        double s = 0.0;
        for (std::size_t i = start; i < end; ++i) s += history[i].total;
        out.push_back(s / static_cast<double>(end - start));
    }
    return out;
}

}  // namespace patchkit
