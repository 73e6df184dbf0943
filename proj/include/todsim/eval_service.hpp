#pragma once

// REST backend for pairwise evaluation.
//   GET  /api/next-task?annotator=<id>  -> 200 task view, 204 when none is left
//   POST /api/annotate                  -> 204; 400 malformed, 404 unknown task, 409 duplicate
//   GET  /api/results                   -> 200 win matrix; needs `Authorization: Bearer <token>`
// Task views name the sides "Assistant 1" and "Assistant 2" and carry only
// presentable turns. Annotations are appended to a JSONL log that is replayed
// on start-up.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/acute_eval.hpp"

namespace httplib {
class Server;
}

namespace todsim {

void write_tasks(const std::filesystem::path& path, std::span<const EvalTask> tasks);
std::vector<EvalTask> load_tasks(const std::filesystem::path& path);

/// What an annotator sees.
nlohmann::json task_view(const EvalTask& task);

struct EvalServiceOptions {
    std::filesystem::path tasks_file;
    std::filesystem::path annotation_log;
    std::size_t controls_per_annotator = 1;
    std::size_t max_control_failures = 0;
    std::chrono::seconds lease{15 * 60};
    /// Empty: read EVAL_ADMIN_TOKEN; results are refused when both are empty.
    std::string admin_token;
    /// Optional directory served at `/` (the UI bundle).
    std::filesystem::path static_dir;
};

class EvalService {
public:
    using Clock = std::chrono::steady_clock;

    explicit EvalService(EvalServiceOptions options);
    ~EvalService();
    EvalService(const EvalService&) = delete;
    EvalService& operator=(const EvalService&) = delete;

    /// Next task for `annotator`, claimed for the lease period; nullopt when
    /// the annotator has nothing left. Re-asking returns the held task.
    std::optional<EvalTask> next_task(const std::string& annotator, Clock::time_point now = Clock::now());

    enum class Submit { Accepted, UnknownTask, Duplicate };
    Submit annotate(Annotation annotation);

    WinMatrix results() const;
    std::vector<Annotation> annotations() const;

    int start(const std::string& host = "127.0.0.1", int port = 0);
    void listen(const std::string& host, int port);
    void stop();

private:
    void install_routes();

    EvalServiceOptions options_;
    std::vector<EvalTask> tasks_;
    std::map<std::string, std::size_t> task_index_;

    mutable std::mutex mutex_;
    std::vector<Annotation> annotations_;
    std::map<std::pair<std::string, std::string>, bool> done_;  // (task, annotator)
    std::map<std::string, std::size_t> annotation_count_;       // per task
    struct Lease {
        std::string annotator;
        Clock::time_point expires;
    };
    std::map<std::string, Lease> leases_;  // task -> holder

    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace todsim
