#include "patchkit/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "patchkit/augmentation.hpp"
#include "patchkit/error.hpp"
#include "patchkit/image_io.hpp"
#include "patchkit/toy_detector.hpp"

namespace patchkit {

namespace {

constexpr std::uint64_t kSyntheticStream = 0xfffffffffffffffdull;

// Clips to the frame and keeps the box when it still has area.
bool keep_box(BoundingBox b, int width, int height, std::vector<BoundingBox>& out) {
    if (!b.valid()) return false;
    b = clip_box(b, width, height);
    if (b.area() <= 0.0) return false;
    out.push_back(b);
    return true;
}

void sort_records(std::vector<SceneRecord>& records) {
    std::sort(records.begin(), records.end(), [](const SceneRecord& a, const SceneRecord& b) { return a.id < b.id; });
}

}  // namespace

Dataset load_coco(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root,
                  long person_category_id) {
    std::ifstream in(annotation_file);
    if (!in) throw IoError("cannot open annotation file " + annotation_file.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed annotation JSON in " + annotation_file.string() + ": " + e.what());
    }

    try {
        const auto& categories = doc.at("categories");
        const bool known = std::any_of(categories.begin(), categories.end(), [&](const nlohmann::json& c) {
            return c.at("id").get<long>() == person_category_id;
        });
        if (!known)
            throw InvalidArgument("unknown category id " + std::to_string(person_category_id) + " in " +
                                  annotation_file.string());

        struct Entry {
            std::string file;
            std::vector<BoundingBox> boxes;
            std::vector<std::array<double, 4>> raw;
        };
        std::map<long, Entry> images;
        for (const auto& img : doc.at("images")) images[img.at("id").get<long>()].file = img.at("file_name").get<std::string>();

        for (const auto& a : doc.value("annotations", nlohmann::json::array())) {
            if (a.at("category_id").get<long>() != person_category_id) continue;
            const long id = a.at("image_id").get<long>();
            auto it = images.find(id);
            if (it == images.end()) throw IoError("annotation refers to unknown image id " + std::to_string(id));
            const auto bbox = a.at("bbox").get<std::vector<double>>();
            if (bbox.size() != 4) throw IoError("bbox must have 4 numbers (image id " + std::to_string(id) + ")");
            it->second.raw.push_back({bbox[0], bbox[1], bbox[2], bbox[3]});
        }

        Dataset ds;
        for (auto& [id, entry] : images) {
            SceneRecord rec;
            rec.id = entry.file;
            rec.image = read_image(image_root / entry.file);
            for (const auto& r : entry.raw) {
                const BoundingBox b{r[0], r[1], r[0] + r[2], r[1] + r[3]};
                if (!keep_box(b, rec.image.width(), rec.image.height(), rec.person_boxes)) ++ds.dropped_boxes;
            }
            ds.records.push_back(std::move(rec));
        }
        sort_records(ds.records);
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed COCO structure in " + annotation_file.string() + ": " + e.what());
    }
}

std::vector<BoundingBox> parse_boxfile(const std::string& text, const std::string& source) {
    std::vector<BoundingBox> out;
    std::istringstream lines(text);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        double v[4];
        std::string extra;
        if (!(fields >> v[0] >> v[1] >> v[2] >> v[3]) || (fields >> extra))
            throw IoError(source + ":" + std::to_string(number) + ": expected 'x1 y1 x2 y2', got '" + line + "'");
        out.push_back({v[0], v[1], v[2], v[3]});
    }
    return out;
}

Dataset load_boxfile_dir(const std::filesystem::path& image_dir, const std::filesystem::path& boxes_dir) {
    if (!std::filesystem::is_directory(image_dir)) throw IoError("image directory not found: " + image_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(image_dir))
        if (e.is_regular_file() && is_supported_image(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    Dataset ds;
    for (const auto& f : files) {
        SceneRecord rec;
        rec.id = f.filename().string();
        rec.image = read_image(f);
        const auto box_path = boxes_dir / (f.stem().string() + ".txt");
        if (std::filesystem::exists(box_path)) {
            std::ifstream in(box_path);
            if (!in) throw IoError("cannot read box file " + box_path.string());
            std::stringstream ss;
            ss << in.rdbuf();
            for (const auto& b : parse_boxfile(ss.str(), box_path.string()))
                if (!keep_box(b, rec.image.width(), rec.image.height(), rec.person_boxes)) ++ds.dropped_boxes;
        }
        ds.records.push_back(std::move(rec));
    }
    sort_records(ds.records);
    return ds;
}

Dataset generate_synthetic(const SyntheticConfig& cfg, const ToyDetectorParams& params) {
    if (cfg.count < 0 || cfg.targets_per_image < 0) throw InvalidArgument("synthetic counts must be >= 0");
    if (!(cfg.background_std >= 0.0)) throw InvalidArgument("synthetic background_std must be >= 0");
    const int th = params.template_height();
    const int tw = params.template_width();
    if (cfg.width < tw || cfg.height < th)
        throw InvalidArgument("synthetic image size is smaller than the detector window");

    const ToyDetector detector(params);
    const RgbImage tile = detector.render_tile(0);
    const int stride = params.stride;
    const int slots_x = (cfg.width - tw) / stride + 1;
    const int slots_y = (cfg.height - th) / stride + 1;

    Dataset ds;
    for (int i = 0; i < cfg.count; ++i) {
        Rng rng = make_substream(cfg.seed, kSyntheticStream, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> noise(0.0, cfg.background_std);
        SceneRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "synthetic_%04d", i);
        rec.id = id;
        rec.image = RgbImage(cfg.height, cfg.width);
        for (double& v : rec.image.values()) v = std::clamp(0.5 + noise(rng), 0.0, 1.0);

        std::uniform_int_distribution<int> pick_x(0, slots_x - 1);
        std::uniform_int_distribution<int> pick_y(0, slots_y - 1);
        // Greedy placement can paint itself into a corner, so a layout that
        // stalls is thrown away and started over.
        const SceneImage background = rec.image;
        int attempts = 0, stalled = 0;
        while (static_cast<int>(rec.person_boxes.size()) < cfg.targets_per_image) {
            if (attempts++ >= cfg.max_attempts)
                throw InvalidArgument("could not place " + std::to_string(cfg.targets_per_image) +
                                      " non-overlapping targets in scene " + rec.id);
            if (stalled >= 32) {
                rec.image = background;
                rec.person_boxes.clear();
                stalled = 0;
            }
            const int x = pick_x(rng) * stride;
            const int y = pick_y(rng) * stride;
            const BoundingBox b{double(x), double(y), double(x + tw), double(y + th)};
            const bool overlaps = std::any_of(rec.person_boxes.begin(), rec.person_boxes.end(),
                                              [&](const BoundingBox& o) { return iou(o, b) > 0.0; });
            if (overlaps) {
                ++stalled;
                continue;
            }
            stalled = 0;
            for (int yy = 0; yy < th; ++yy)
                for (int xx = 0; xx < tw; ++xx)
                    for (int c = 0; c < RgbImage::kChannels; ++c) rec.image.at(y + yy, x + xx, c) = tile.at(yy, xx, c);
            rec.person_boxes.push_back(b);
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

Dataset resize_dataset(const Dataset& dataset, int height, int width) {
    Dataset out;
    out.dropped_boxes = dataset.dropped_boxes;
    out.records.reserve(dataset.records.size());
    for (const auto& r : dataset.records) {
        SceneRecord s;
        s.id = r.id;
        s.image = resize_bilinear(r.image, height, width);
        for (const auto& b : r.person_boxes)
            s.person_boxes.push_back(scale_box(b, r.image.height(), r.image.width(), height, width));
        out.records.push_back(std::move(s));
    }
    return out;
}

}  // namespace patchkit
