#include "todsim/eval_service.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>

#include <httplib.h>

#include "todsim/error.hpp"

namespace todsim {

namespace {

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json view_turns(const std::vector<Turn>& turns) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : presentable_turns(turns)) {
        out.push_back({{"speaker", t.speaker == Speaker::User ? "User" : "Assistant"}, {"text", t.text}});
    }
    return out;
}

}  // namespace

void write_tasks(const std::filesystem::path& path, std::span<const EvalTask> tasks) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& t : tasks) out << to_json(t).dump() << '\n';
}

std::vector<EvalTask> load_tasks(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<EvalTask> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(eval_task_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        } catch (const ParseError& e) {
            throw ParseError(line_no, e.reason());
        }
    }
    return out;
}

nlohmann::json task_view(const EvalTask& task) {
    return {{"task_id", task.id},
            {"question", task.question},
            {"labels", {"Assistant 1", "Assistant 2"}},
            {"left", view_turns(task.left)},
            {"right", view_turns(task.right)}};
}

EvalService::EvalService(EvalServiceOptions options) : options_(std::move(options)) {
    tasks_ = load_tasks(options_.tasks_file);
    for (std::size_t i = 0; i < tasks_.size(); ++i) task_index_[tasks_[i].id] = i;
    if (options_.admin_token.empty()) {
        if (const char* env = std::getenv("EVAL_ADMIN_TOKEN")) options_.admin_token = env;
    }
    if (std::filesystem::exists(options_.annotation_log)) {
        std::ifstream in(options_.annotation_log, std::ios::binary);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            Annotation a;
            try {
                a = annotation_from_json(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(line_no, e.what());
            } catch (const ParseError& e) {
                throw ParseError(line_no, e.reason());
            }
            if (done_.emplace(std::make_pair(a.task_id, a.annotator_id), true).second) {
                ++annotation_count_[a.task_id];
                annotations_.push_back(std::move(a));
            }
        }
    }
}

EvalService::~EvalService() {
    stop();
}

std::optional<EvalTask> EvalService::next_task(const std::string& annotator, Clock::time_point now) {
    std::lock_guard lock(mutex_);
    for (auto it = leases_.begin(); it != leases_.end();) {
        it = it->second.expires <= now ? leases_.erase(it) : std::next(it);
    }
    for (const auto& [task, lease] : leases_) {
        if (lease.annotator == annotator && !done_.contains({task, annotator})) return tasks_[task_index_.at(task)];
    }

    std::size_t controls_done = 0;
    for (const auto& t : tasks_) {
        if (t.is_control && done_.contains({t.id, annotator})) ++controls_done;
    }
    const bool want_control = controls_done < options_.controls_per_annotator;

    const EvalTask* best = nullptr;
    for (const auto& t : tasks_) {
        if (done_.contains({t.id, annotator}) || leases_.contains(t.id)) continue;
        if (!best) {
            best = &t;
            continue;
        }
        // Owed controls first, then least-annotated first, then file order.
        const bool t_pref = want_control && t.is_control;
        const bool b_pref = want_control && best->is_control;
        if (t_pref != b_pref) {
            if (t_pref) best = &t;
            continue;
        }
        if (annotation_count_[t.id] < annotation_count_[best->id]) best = &t;
    }
    if (!best) return std::nullopt;
    leases_[best->id] = Lease{annotator, now + options_.lease};
    return *best;
}

EvalService::Submit EvalService::annotate(Annotation annotation) {
    std::lock_guard lock(mutex_);
    if (!task_index_.contains(annotation.task_id)) return Submit::UnknownTask;
    const auto key = std::make_pair(annotation.task_id, annotation.annotator_id);
    if (done_.contains(key)) return Submit::Duplicate;
    if (annotation.timestamp.empty()) annotation.timestamp = utc_now();

    if (options_.annotation_log.has_parent_path()) {
        std::filesystem::create_directories(options_.annotation_log.parent_path());
    }
    std::ofstream out(options_.annotation_log, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + options_.annotation_log.string());
    out << to_json(annotation).dump() << '\n';
    out.flush();

    done_.emplace(key, true);
    ++annotation_count_[annotation.task_id];
    if (const auto it = leases_.find(annotation.task_id); it != leases_.end() && it->second.annotator == annotation.annotator_id) {
        leases_.erase(it);
    }
    annotations_.push_back(std::move(annotation));
    return Submit::Accepted;
}

std::vector<Annotation> EvalService::annotations() const {
    std::lock_guard lock(mutex_);
    return annotations_;
}

WinMatrix EvalService::results() const {
    const auto snapshot = annotations();
    const auto excluded = gate_annotators(snapshot, tasks_, options_.max_control_failures);
    return win_matrix(snapshot, tasks_, excluded);
}

void EvalService::install_routes() {
    server_ = std::make_unique<httplib::Server>();
    server_->Get("/api/next-task", [this](const httplib::Request& req, httplib::Response& res) {
        const auto annotator = req.get_param_value("annotator");
        if (annotator.empty()) {
            res.status = 400;
            res.set_content(R"({"error":"annotator is required"})", "application/json");
            return;
        }
        const auto task = next_task(annotator);
        if (!task) {
            res.status = 204;
            return;
        }
        res.set_content(task_view(*task).dump(), "application/json");
    });
    server_->Post("/api/annotate", [this](const httplib::Request& req, httplib::Response& res) {
        Annotation a;
        try {
            a = annotation_from_json(nlohmann::json::parse(req.body));
            a.timestamp.clear();
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
            return;
        }
        switch (annotate(std::move(a))) {
            case Submit::Accepted:
                res.status = 204;
                break;
            case Submit::UnknownTask:
                res.status = 404;
                res.set_content(R"({"error":"unknown task"})", "application/json");
                break;
            case Submit::Duplicate:
                res.status = 409;
                res.set_content(R"({"error":"already annotated"})", "application/json");
                break;
        }
    });
    server_->Get("/api/results", [this](const httplib::Request& req, httplib::Response& res) {
        const auto auth = req.get_header_value("Authorization");
        if (options_.admin_token.empty() || auth != "Bearer " + options_.admin_token) {
            res.status = 403;
            res.set_content(R"({"error":"admin token required"})", "application/json");
            return;
        }
        res.set_content(to_json(results()).dump(), "application/json");
    });
    if (!options_.static_dir.empty()) server_->set_mount_point("/", options_.static_dir.string());
}

int EvalService::start(const std::string& host, int port) {
    install_routes();
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void EvalService::listen(const std::string& host, int port) {
    install_routes();
    if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void EvalService::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace todsim
