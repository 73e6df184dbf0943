#include "todsim/trainer.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <map>
#include <sstream>

#include "todsim/data_io.hpp"
#include "todsim/error.hpp"

namespace todsim {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

ModelHandle ExemplarTrainer::train(const TrainRequest& request) {
    std::map<std::string, std::pair<const Episode*, std::uint64_t>> unique;
    std::vector<std::string> order;
    for (const auto& e : request.train) {
        auto [it, inserted] = unique.try_emplace(to_jsonl_line(e), &e, 0);
        if (inserted) order.push_back(it->first);
        ++it->second.second;
    }
    auto store = std::make_shared<ExemplarStore>();
    for (const auto& key : order) {
        const auto& [episode, count] = unique.at(key);
        train_exemplar(*store, *episode, TrainRole::Both, request.schema_aware, count);
    }
    return ModelHandle{std::move(store), {}};
}

ProcessResult run_process(const std::string& command, std::chrono::seconds timeout) {
    int fds[2];
    if (pipe(fds) != 0) throw TrainerFailed("pipe failed");
    const pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw TrainerFailed("fork failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(fds[1], STDOUT_FILENO);
        close(fds[0]);
        close(fds[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(fds[1]);

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buf[4096];
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            result.timed_out = true;
            kill(-pid, SIGKILL);
            break;
        }
        pollfd p{fds[0], POLLIN, 0};
        const int ready = poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (ready <= 0) continue;
        const ssize_t n = read(fds[0], buf, sizeof buf);
        if (n <= 0) break;
        result.output.append(buf, static_cast<std::size_t>(n));
    }
    close(fds[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (!result.timed_out) result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return result;
}

ModelHandle ExternalCommandTrainer::train(const TrainRequest& request) {
    const auto dir = request.workdir / (request.schema_aware ? "trainer_aware" : "trainer_agnostic");
    std::filesystem::create_directories(dir);
    const auto train_path = dir / "train.jsonl";
    const auto valid_path = dir / "valid.jsonl";
    write_episodes(train_path, request.train);
    write_episodes(valid_path, request.valid);

    std::string cmd = command_ + " --train " + shell_quote(train_path.string()) + " --valid " +
                      shell_quote(valid_path.string()) + " --init " + shell_quote(request.init.checkpoint) +
                      " --role both --schema-aware " + (request.schema_aware ? "true" : "false");
    const auto result = run_process(cmd, timeout_);
    if (result.timed_out) throw TrainerFailed("trainer timed out after " + std::to_string(timeout_.count()) + " s");
    if (result.exit_code != 0) throw TrainerFailed("trainer exited with status " + std::to_string(result.exit_code));

    std::istringstream lines(result.output);
    std::string line, checkpoint;
    while (std::getline(lines, line)) {
        if (line.starts_with("CHECKPOINT ")) checkpoint = trim(line.substr(11));
    }
    if (checkpoint.empty()) throw TrainerFailed("trainer printed no CHECKPOINT line");
    return ModelHandle{nullptr, checkpoint};
}

nlohmann::json save_handle(const ModelHandle& handle, const std::filesystem::path& store_path,
                           const std::filesystem::path& base) {
    if (handle.store) {
        handle.store->save(store_path);
        const auto recorded = base.empty() ? store_path : store_path.lexically_relative(base);
        return {{"kind", "exemplar"}, {"path", recorded.generic_string()}};
    }
    return {{"kind", "checkpoint"}, {"path", handle.checkpoint}};
}

ModelHandle load_handle(const nlohmann::json& j, const std::filesystem::path& base) {
    const auto kind = j.at("kind").get<std::string>();
    const auto path = j.at("path").get<std::string>();
    if (kind == "exemplar") {
        std::filesystem::path p(path);
        if (p.is_relative() && !base.empty()) p = base / p;
        return ModelHandle{std::make_shared<ExemplarStore>(ExemplarStore::load(p)), {}};
    }
    if (kind == "checkpoint") return ModelHandle{nullptr, path};
    throw ParseError(0, "unknown model kind " + kind);
}

}  // namespace todsim
