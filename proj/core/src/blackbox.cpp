#include "patchkit/blackbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include "json.hpp"
#include "patchkit/image_io.hpp"

namespace patchkit {

using nlohmann::json;

AdapterError::AdapterError(Kind kind, const std::string& message, std::string payload)
    : Error(std::string("adapter ") + to_string(kind) + ": " + message), kind_(kind), payload_(std::move(payload)) {}

const char* to_string(AdapterError::Kind kind) {
    switch (kind) {
        case AdapterError::Kind::Spawn: return "spawn failure";
        case AdapterError::Kind::Crash: return "crash";
        case AdapterError::Kind::Malformed: return "malformed response";
        case AdapterError::Kind::Timeout: return "timeout";
        case AdapterError::Kind::Validation: return "validation error";
    }
    return "error";
}

std::string format_adapter_request(long id, const std::string& image_path) {
    return json{{"id", id}, {"image", image_path}}.dump();
}

DetectorOutput parse_adapter_response(const std::string& line, long expected_id) {
    using Kind = AdapterError::Kind;
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw AdapterError(Kind::Malformed, std::string("not JSON: ") + e.what(), line);
    }
    if (!doc.is_object()) throw AdapterError(Kind::Malformed, "response is not an object", line);
    if (!doc.contains("id") || !doc["id"].is_number_integer())
        throw AdapterError(Kind::Malformed, "missing integer field 'id'", line);
    if (doc["id"].get<long>() != expected_id)
        throw AdapterError(Kind::Malformed,
                           "response id " + std::to_string(doc["id"].get<long>()) + " does not match request id " +
                               std::to_string(expected_id),
                           line);
    if (!doc.contains("detections") || !doc["detections"].is_array())
        throw AdapterError(Kind::Malformed, "missing array field 'detections'", line);

    DetectorOutput out;
    const auto& dets = doc["detections"];
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const std::string where = "detections[" + std::to_string(i) + "]";
        const auto& d = dets[i];
        if (!d.is_object()) throw AdapterError(Kind::Malformed, where + " is not an object", line);
        if (!d.contains("box") || !d["box"].is_array() || d["box"].size() != 4)
            throw AdapterError(Kind::Malformed, where + ".box must be an array of 4 numbers", line);
        for (const auto& v : d["box"])
            if (!v.is_number()) throw AdapterError(Kind::Malformed, where + ".box must hold numbers", line);
        if (!d.contains("label") || !d["label"].is_string())
            throw AdapterError(Kind::Malformed, where + ".label must be a string", line);
        if (!d.contains("score") || !d["score"].is_number())
            throw AdapterError(Kind::Malformed, where + ".score must be a number", line);

        Detection det;
        det.box = {d["box"][0].get<double>(), d["box"][1].get<double>(), d["box"][2].get<double>(),
                   d["box"][3].get<double>()};
        det.label = d["label"].get<std::string>();
        det.confidence = d["score"].get<double>();
        if (!(det.confidence >= 0.0 && det.confidence <= 1.0))
            throw AdapterError(Kind::Validation, where + ".score " + std::to_string(det.confidence) + " outside [0, 1]",
                               line);
        if (!det.box.valid())
            throw AdapterError(Kind::Validation, where + ".box violates x1 <= x2, y1 <= y2", line);
        out.detections.push_back(std::move(det));
    }
    return out;
}

BlackboxAdapter::BlackboxAdapter(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
    start();
}

BlackboxAdapter::~BlackboxAdapter() { stop(); }

void BlackboxAdapter::start() {
    static const bool sigpipe_ignored = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;

    int in[2], out[2];
    if (::pipe(in) != 0) throw AdapterError(AdapterError::Kind::Spawn, std::strerror(errno), command_);
    if (::pipe(out) != 0) {
        ::close(in[0]);
        ::close(in[1]);
        throw AdapterError(AdapterError::Kind::Spawn, std::strerror(errno), command_);
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in[0], in[1], out[0], out[1]}) ::close(fd);
        throw AdapterError(AdapterError::Kind::Spawn, std::strerror(errno), command_);
    }
    if (pid == 0) {
        ::dup2(in[0], STDIN_FILENO);
        ::dup2(out[1], STDOUT_FILENO);
        for (int fd : {in[0], in[1], out[0], out[1]}) ::close(fd);
        // Own process group, so a kill also reaches anything the command spawns.
        ::setpgid(0, 0);
        const std::string line = "exec " + command_;
        ::execl("/bin/sh", "sh", "-c", line.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(in[0]);
    ::close(out[1]);
    ::fcntl(in[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(out[0], F_SETFD, FD_CLOEXEC);
    pid_ = pid;
    to_child_ = in[1];
    from_child_ = out[0];
    buffer_.clear();
}

void BlackboxAdapter::stop() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        int status = 0;
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) != 0) {
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(-pid_, SIGKILL);
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

bool BlackboxAdapter::alive() const {
    if (pid_ <= 0) return false;
    int status = 0;
    return ::waitpid(pid_, &status, WNOHANG) == 0;
}

std::string BlackboxAdapter::read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0)
            throw AdapterError(AdapterError::Kind::Timeout,
                               "no response within " + std::to_string(timeout_.count()) + " ms", buffer_);
        pollfd pfd{from_child_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw AdapterError(AdapterError::Kind::Crash, std::strerror(errno), buffer_);
        }
        if (rc == 0) continue;
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw AdapterError(AdapterError::Kind::Crash, std::strerror(errno), buffer_);
        }
        if (n == 0) throw AdapterError(AdapterError::Kind::Crash, "adapter closed its output", buffer_);
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

DetectorOutput BlackboxAdapter::detect(const std::filesystem::path& image_path) {
    std::lock_guard lock(mutex_);
    if (to_child_ < 0) start();

    const long id = next_id_++;
    const std::string request = format_adapter_request(id, std::filesystem::absolute(image_path).string()) + "\n";
    try {
        std::size_t written = 0;
        while (written < request.size()) {
            const ssize_t n = ::write(to_child_, request.data() + written, request.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw AdapterError(AdapterError::Kind::Crash, std::string("write failed: ") + std::strerror(errno),
                                   request);
            }
            written += static_cast<std::size_t>(n);
        }
        const std::string line = read_line(std::chrono::steady_clock::now() + timeout_);
        return parse_adapter_response(line, id);
    } catch (const AdapterError& e) {
        // The stream position is unknown after a crash or timeout; respawn next time.
        if (e.kind() == AdapterError::Kind::Crash || e.kind() == AdapterError::Kind::Timeout) stop();
        throw;
    }
}

DetectorOutput blackbox_detect(BlackboxAdapter& adapter, const std::filesystem::path& image_path) {
    return adapter.detect(image_path);
}

BlackboxDetector::BlackboxDetector(std::string name, std::string command, std::filesystem::path scratch_dir,
                                   double tau_det, std::chrono::milliseconds timeout)
    : name_(std::move(name)),
      adapter_(std::move(command), timeout),
      scratch_dir_(std::move(scratch_dir)),
      tau_det_(tau_det) {
    std::filesystem::create_directories(scratch_dir_);
}

DetectorOutput BlackboxDetector::detect(const SceneImage& image) {
    const auto path = std::filesystem::absolute(scratch_dir_ / ("frame_" + std::to_string(counter_++) + ".png"));
    write_png(path, image);
    DetectorOutput raw;
    try {
        raw = adapter_.detect(path);
    } catch (...) {
        std::filesystem::remove(path);
        throw;
    }
    std::filesystem::remove(path);
    DetectorOutput out;
    for (auto& d : raw.detections)
        if (d.confidence > tau_det_) out.detections.push_back(std::move(d));
    return out;
}

}  // namespace patchkit
