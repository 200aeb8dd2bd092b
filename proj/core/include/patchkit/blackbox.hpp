#pragma once

#include <chrono>
#include <filesystem>
#include <mutex>
#include <string>
#include <sys/types.h>

#include "patchkit/detector.hpp"
#include "patchkit/error.hpp"

namespace patchkit {

class AdapterError : public Error {
public:
    enum class Kind { Spawn, Crash, Malformed, Timeout, Validation };

    AdapterError(Kind kind, const std::string& message, std::string payload = {});

    Kind kind() const { return kind_; }
    const std::string& payload() const { return payload_; }

private:
    Kind kind_;
    std::string payload_;
};

const char* to_string(AdapterError::Kind kind);

// Parses one response line of the adapter protocol and validates it.
// Throws AdapterError (Malformed or Validation) naming the offending field.
DetectorOutput parse_adapter_response(const std::string& line, long expected_id);

std::string format_adapter_request(long id, const std::string& image_path);

// A detector running in a child process, spoken to with newline-delimited JSON
// over its stdin/stdout. One request in flight per instance.
class BlackboxAdapter {
public:
    explicit BlackboxAdapter(std::string command,
                             std::chrono::milliseconds timeout = std::chrono::seconds(60));
    ~BlackboxAdapter();

    BlackboxAdapter(const BlackboxAdapter&) = delete;
    BlackboxAdapter& operator=(const BlackboxAdapter&) = delete;

    const std::string& command() const { return command_; }
    bool alive() const;

    DetectorOutput detect(const std::filesystem::path& image_path);

private:
    void start();
    void stop();
    std::string read_line(std::chrono::steady_clock::time_point deadline);

    std::string command_;
    std::chrono::milliseconds timeout_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    long next_id_ = 0;
    std::string buffer_;
    mutable std::mutex mutex_;
};

DetectorOutput blackbox_detect(BlackboxAdapter& adapter, const std::filesystem::path& image_path);

// Evaluation-tier wrapper: writes each image to a PNG in `scratch_dir`, queries
// the adapter, and keeps detections above tau_det.
class BlackboxDetector : public Detector {
public:
    BlackboxDetector(std::string name, std::string command, std::filesystem::path scratch_dir,
                     double tau_det, std::chrono::milliseconds timeout = std::chrono::seconds(60));

    std::string name() const override { return name_; }
    DetectorOutput detect(const SceneImage& image) override;

private:
    std::string name_;
    BlackboxAdapter adapter_;
    std::filesystem::path scratch_dir_;
    double tau_det_;
    long counter_ = 0;
};

}  // namespace patchkit
