#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchkit/geometry.hpp"
#include "patchkit/image.hpp"

namespace patchkit {

struct ToyDetectorParams;

struct SceneRecord {
    std::string id;
    SceneImage image;
    std::vector<BoundingBox> person_boxes;
};

struct Dataset {
    std::vector<SceneRecord> records;  // sorted by id
    std::size_t dropped_boxes = 0;     // zero-area or out-of-frame annotations
};

// COCO annotations; bbox [x, y, w, h] becomes corner format, person category
// only, clipped to the image. Throws IoError for a missing or malformed file
// and InvalidArgument for an unknown category id.
Dataset load_coco(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root,
                  long person_category_id);

// Images in `image_dir` paired with `<stem>.txt` box files of "x1 y1 x2 y2"
// lines in `boxes_dir`. A missing box file means no boxes.
Dataset load_boxfile_dir(const std::filesystem::path& image_dir, const std::filesystem::path& boxes_dir);

// Parses box-file text; `source` names the file in error messages.
std::vector<BoundingBox> parse_boxfile(const std::string& text, const std::string& source);

struct SyntheticConfig {
    int count = 64;
    int width = 192;
    int height = 192;
    int targets_per_image = 2;
    double background_std = 0.1;
    std::uint64_t seed = 42;
    int max_attempts = 1000;
};

// Gaussian-noise backgrounds with the toy person tile planted at random
// stride-aligned, non-overlapping positions.
Dataset generate_synthetic(const SyntheticConfig& cfg, const ToyDetectorParams& detector);

// Resizes every scene to (height, width) with boxes scaled to match.
Dataset resize_dataset(const Dataset& dataset, int height, int width);

}  // namespace patchkit
