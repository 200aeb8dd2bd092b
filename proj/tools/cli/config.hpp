#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "patchkit/dataset.hpp"
#include "patchkit/error.hpp"
#include "patchkit/evaluation.hpp"
#include "patchkit/experiments.hpp"
#include "patchkit/trainer.hpp"

namespace patchkit::cli {

// Invalid or unknown configuration field; maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class DatasetFormat { CocoJson, BoxfileDir, Synthetic };

struct DatasetManifest {
    DatasetFormat format = DatasetFormat::Synthetic;
    std::filesystem::path annotations;  // coco-json
    std::filesystem::path images;       // coco-json image root, boxfile-dir images
    std::filesystem::path boxes;        // boxfile-dir
    long person_category_id = 1;
    SyntheticConfig synthetic;
};

struct RunConfig {
    DatasetManifest dataset;
    std::string detector = "toy";                // "toy" or "blackbox:<command>"
    std::map<std::string, std::string> victims;  // name -> detector spec, for transfer
    std::uint64_t toy_seed = 7;
    double adapter_timeout_seconds = 60.0;
    TrainConfig train;
    EvalProtocol eval;
    AblationGrid ablation;
    std::filesystem::path out = "out";
};

// Parses strict JSON: unknown keys and wrong types are ConfigErrors naming the
// field. Relative paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Checks component invariants, reporting the offending field.
void validate_config(const RunConfig& cfg);

// Every resolved field that can change results, defaults included. The output
// directory and job count are left out so reruns elsewhere stay byte-identical.
nlohmann::json resolved_config(const RunConfig& cfg);

std::string to_string(DatasetFormat f);

}  // namespace patchkit::cli
