#include "cli/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace patchkit::cli {

namespace {

using nlohmann::json;

constexpr double kDegree = std::numbers::pi / 180.0;

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
public:
    Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
        if (node_ && !node_->is_object()) throw ConfigError(where() + " must be an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        if (!node_) return nullptr;
        auto it = node_->find(key);
        return it == node_->end() ? nullptr : &*it;
    }

    template <class T>
    void get(const std::string& key, T& dst) {
        if (const json* v = find(key)) {
            try {
                if constexpr (std::is_same_v<T, bool>) {
                    if (!v->is_boolean()) throw ConfigError(field(key) + " must be true or false");
                } else if constexpr (std::is_integral_v<T>) {
                    if (!v->is_number_integer()) throw ConfigError(field(key) + " must be an integer");
                    if constexpr (std::is_unsigned_v<T>)
                        if (v->get<long long>() < 0) throw ConfigError(field(key) + " must be >= 0");
                } else if constexpr (std::is_floating_point_v<T>) {
                    if (!v->is_number()) throw ConfigError(field(key) + " must be a number");
                } else if constexpr (std::is_same_v<T, std::string>) {
                    if (!v->is_string()) throw ConfigError(field(key) + " must be a string");
                }
                dst = v->get<T>();
            } catch (const json::exception& e) {
                throw ConfigError(field(key) + ": " + e.what());
            }
        }
    }

    void path(const std::string& key, std::filesystem::path& dst, const std::filesystem::path& base) {
        std::string s;
        get(key, s);
        if (!s.empty()) dst = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
    }

    // [h, w] or a single integer for a square size.
    void resolution(const std::string& key, int& h, int& w) {
        const json* v = find(key);
        if (!v) return;
        if (v->is_number_integer()) {
            h = w = v->get<int>();
        } else if (v->is_array() && v->size() == 2 && (*v)[0].is_number_integer() && (*v)[1].is_number_integer()) {
            h = (*v)[0].get<int>();
            w = (*v)[1].get<int>();
        } else {
            throw ConfigError(field(key) + " must be an integer or [height, width]");
        }
    }

    Section child(const std::string& key) { return Section(find(key), field(key)); }

    void finish() const {
        if (!node_) return;
        for (const auto& [key, value] : node_->items())
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + field(key) + "'");
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json* node_;
    std::string path_;
    std::set<std::string> seen_;
};

DatasetFormat parse_format(const std::string& s) {
    if (s == "coco-json") return DatasetFormat::CocoJson;
    if (s == "boxfile-dir") return DatasetFormat::BoxfileDir;
    if (s == "synthetic") return DatasetFormat::Synthetic;
    throw ConfigError("dataset.format must be coco-json, boxfile-dir or synthetic (got '" + s + "')");
}

std::string init_name(PatchInit init) { return init == PatchInit::Gray ? "gray" : "uniform-random"; }

}  // namespace

std::string to_string(DatasetFormat f) {
    switch (f) {
        case DatasetFormat::CocoJson: return "coco-json";
        case DatasetFormat::BoxfileDir: return "boxfile-dir";
        case DatasetFormat::Synthetic: return "synthetic";
    }
    return "unknown";
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    // The toy benchmark scale; real datasets set input_resolution explicitly.
    cfg.train.input_height = cfg.train.input_width = 192;
    cfg.train.patch_height = cfg.train.patch_width = 32;
    cfg.train.checkpoint_every = 50;

    Section root(&doc, "");
    {
        Section d = root.child("dataset");
        std::string format = "synthetic";
        d.get("format", format);
        cfg.dataset.format = parse_format(format);
        d.path("annotations", cfg.dataset.annotations, base_dir);
        d.path("images", cfg.dataset.images, base_dir);
        d.path("boxes", cfg.dataset.boxes, base_dir);
        d.get("person_category_id", cfg.dataset.person_category_id);
        auto& s = cfg.dataset.synthetic;
        d.get("count", s.count);
        d.get("width", s.width);
        d.get("height", s.height);
        d.get("targets_per_image", s.targets_per_image);
        d.get("background_std", s.background_std);
        d.get("seed", s.seed);
        d.finish();
    }
    root.get("detector", cfg.detector);
    if (const json* v = root.find("victims")) {
        if (!v->is_object()) throw ConfigError("victims must be an object of name -> detector");
        for (const auto& [name, spec] : v->items()) {
            if (!spec.is_string()) throw ConfigError("victims." + name + " must be a string");
            cfg.victims[name] = spec.get<std::string>();
        }
    }
    {
        Section t = root.child("toy_detector");
        t.get("seed", cfg.toy_seed);
        t.finish();
    }
    root.get("adapter_timeout_seconds", cfg.adapter_timeout_seconds);
    {
        Section t = root.child("train");
        auto& tc = cfg.train;
        t.get("learning_rate", tc.learning_rate);
        t.get("batch_size", tc.batch_size);
        t.get("epochs", tc.epochs);
        t.resolution("input_resolution", tc.input_height, tc.input_width);
        t.resolution("patch_resolution", tc.patch_height, tc.patch_width);
        std::string init = init_name(tc.init);
        t.get("init", init);
        try {
            tc.init = parse_patch_init(init);
        } catch (const Error& e) {
            throw ConfigError(t.field("init") + ": " + e.what());
        }
        t.get("augment", tc.augment);
        t.get("checkpoint_every", tc.checkpoint_every);
        Section a = t.child("adam");
        a.get("beta1", tc.adam.beta1);
        a.get("beta2", tc.adam.beta2);
        a.get("epsilon", tc.adam.epsilon);
        a.finish();
        t.finish();
    }
    {
        Section l = root.child("loss");
        Section w = l.child("weights");
        w.get("det", cfg.train.weights.det);
        w.get("iou", cfg.train.weights.iou);
        w.get("nms", cfg.train.weights.nms);
        w.get("app", cfg.train.weights.app);
        w.finish();
        l.get("tau_conf", cfg.train.thresholds.conf);
        l.get("tau_nms", cfg.train.thresholds.nms);
        l.get("top_k", cfg.train.thresholds.top_k);
        l.get("sigma_min", cfg.train.appearance.sigma_min);
        l.get("lambda_smooth", cfg.train.appearance.lambda_smooth);
        l.finish();
    }
    {
        Section a = root.child("augmentation");
        auto& ac = cfg.train.augmentation;
        double rotation_degrees = ac.rotation_range / kDegree;
        a.get("brightness_delta", ac.brightness_delta);
        a.get("noise_std", ac.noise_std);
        a.get("rotation_degrees", rotation_degrees);
        a.get("scale_min", ac.scale_min);
        a.get("scale_max", ac.scale_max);
        a.get("perspective", ac.perspective_magnitude);
        a.get("draws_per_image", ac.draws_per_image);
        ac.rotation_range = rotation_degrees * kDegree;
        a.finish();
    }
    {
        Section p = root.child("placement");
        auto& pc = cfg.train.placement;
        double rotation_degrees = pc.rotation / kDegree;
        p.get("scale_fraction", pc.scale_fraction);
        p.get("vertical_anchor", pc.vertical_anchor);
        p.get("rotation_degrees", rotation_degrees);
        p.get("perspective", pc.perspective_magnitude);
        pc.rotation = rotation_degrees * kDegree;
        p.finish();
    }
    {
        Section e = root.child("eval");
        e.get("iou_match_threshold", cfg.eval.iou_match_threshold);
        e.get("tau_det", cfg.eval.tau_det);
        e.finish();
        cfg.train.thresholds.det = cfg.eval.tau_det;
    }
    {
        Section a = root.child("ablation");
        a.get("epochs", cfg.ablation.epochs);
        a.get("patch_sizes", cfg.ablation.patch_sizes);
        a.get("loss_weights", cfg.ablation.loss_weights);
        a.get("seeds", cfg.ablation.seeds);
        a.finish();
    }
    root.get("seed", cfg.train.seed);
    root.get("jobs", cfg.train.jobs);
    root.path("out", cfg.out, base_dir);
    root.finish();

    if (cfg.victims.empty()) cfg.victims["toy"] = "toy";
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

void validate_config(const RunConfig& cfg) {
    const auto& d = cfg.dataset;
    if (d.format == DatasetFormat::CocoJson) {
        if (d.annotations.empty()) throw ConfigError("dataset.annotations is required for coco-json");
        if (d.images.empty()) throw ConfigError("dataset.images is required for coco-json");
        if (!std::filesystem::exists(d.annotations))
            throw ConfigError("dataset.annotations: file not found: " + d.annotations.string());
    } else if (d.format == DatasetFormat::BoxfileDir) {
        if (d.images.empty()) throw ConfigError("dataset.images is required for boxfile-dir");
        if (d.boxes.empty()) throw ConfigError("dataset.boxes is required for boxfile-dir");
        if (!std::filesystem::is_directory(d.images))
            throw ConfigError("dataset.images: directory not found: " + d.images.string());
    } else {
        if (d.synthetic.count < 1) throw ConfigError("dataset.count must be >= 1");
        if (d.synthetic.targets_per_image < 0) throw ConfigError("dataset.targets_per_image must be >= 0");
        if (!(d.synthetic.background_std >= 0.0)) throw ConfigError("dataset.background_std must be >= 0");
    }
    const auto detector_ok = [](const std::string& s) { return s == "toy" || s.rfind("blackbox:", 0) == 0; };
    if (!detector_ok(cfg.detector)) throw ConfigError("detector must be 'toy' or 'blackbox:<command>'");
    for (const auto& [name, spec] : cfg.victims)
        if (!detector_ok(spec)) throw ConfigError("victims." + name + " must be 'toy' or 'blackbox:<command>'");
    if (!(cfg.adapter_timeout_seconds > 0.0)) throw ConfigError("adapter_timeout_seconds must be > 0");
    if (cfg.out.empty()) throw ConfigError("out must not be empty");
    try {
        cfg.train.validate();
        cfg.eval.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    for (int e : cfg.ablation.epochs)
        if (e < 1) throw ConfigError("ablation.epochs entries must be >= 1");
    for (double b : cfg.ablation.patch_sizes)
        if (!(b > 0.0 && b <= 1.0)) throw ConfigError("ablation.patch_sizes entries must be in (0, 1]");
}

nlohmann::json resolved_config(const RunConfig& cfg) {
    const auto& t = cfg.train;
    const auto& d = cfg.dataset;
    json dataset{{"format", to_string(d.format)}};
    if (d.format == DatasetFormat::Synthetic) {
        dataset.update({{"count", d.synthetic.count},
                        {"width", d.synthetic.width},
                        {"height", d.synthetic.height},
                        {"targets_per_image", d.synthetic.targets_per_image},
                        {"background_std", d.synthetic.background_std},
                        {"seed", d.synthetic.seed}});
    } else {
        dataset["images"] = d.images.string();
        if (d.format == DatasetFormat::CocoJson) {
            dataset["annotations"] = d.annotations.string();
            dataset["person_category_id"] = d.person_category_id;
        } else {
            dataset["boxes"] = d.boxes.string();
        }
    }
    return json{
        {"dataset", dataset},
        {"detector", cfg.detector},
        {"victims", cfg.victims},
        {"toy_detector", {{"seed", cfg.toy_seed}}},
        {"adapter_timeout_seconds", cfg.adapter_timeout_seconds},
        {"train",
         {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"input_resolution", {t.input_height, t.input_width}},
          {"patch_resolution", {t.patch_height, t.patch_width}},
          {"init", init_name(t.init)},
          {"augment", t.augment},
          {"checkpoint_every", t.checkpoint_every},
          {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}}}}},
        {"loss",
         {{"weights", {{"det", t.weights.det}, {"iou", t.weights.iou}, {"nms", t.weights.nms}, {"app", t.weights.app}}},
          {"tau_conf", t.thresholds.conf},
          {"tau_nms", t.thresholds.nms},
          {"top_k", t.thresholds.top_k},
          {"sigma_min", t.appearance.sigma_min},
          {"lambda_smooth", t.appearance.lambda_smooth}}},
        {"augmentation",
         {{"brightness_delta", t.augmentation.brightness_delta},
          {"noise_std", t.augmentation.noise_std},
          {"rotation_degrees", t.augmentation.rotation_range / kDegree},
          {"scale_min", t.augmentation.scale_min},
          {"scale_max", t.augmentation.scale_max},
          {"perspective", t.augmentation.perspective_magnitude},
          {"draws_per_image", t.augmentation.draws_per_image}}},
        {"placement",
         {{"scale_fraction", t.placement.scale_fraction},
          {"vertical_anchor", t.placement.vertical_anchor},
          {"rotation_degrees", t.placement.rotation / kDegree},
          {"perspective", t.placement.perspective_magnitude}}},
        {"eval", {{"iou_match_threshold", cfg.eval.iou_match_threshold}, {"tau_det", cfg.eval.tau_det}}},
        {"ablation",
         {{"epochs", cfg.ablation.epochs},
          {"patch_sizes", cfg.ablation.patch_sizes},
          {"loss_weights", cfg.ablation.loss_weights},
          {"seeds", cfg.ablation.seeds}}},
        {"seed", t.seed},
    };
}

}  // namespace patchkit::cli
