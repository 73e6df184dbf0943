#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/exemplar.hpp"

namespace todsim {

/// Opaque reference to a trained model: an in-memory exemplar store, or a
/// checkpoint path produced by an external trainer.
struct ModelHandle {
    std::shared_ptr<const ExemplarStore> store;
    std::string checkpoint;

    bool empty() const { return !store && checkpoint.empty(); }
};

struct TrainRequest {
    std::vector<Episode> train;
    std::vector<Episode> valid;
    ModelHandle init;
    bool schema_aware = false;
    /// Scratch directory for files handed to external trainers.
    std::filesystem::path workdir;
};

class Trainer {
public:
    virtual ~Trainer() = default;
    virtual ModelHandle train(const TrainRequest& request) = 0;
};

/// Builds an exemplar store over the full training list. The store is
/// additive, so retraining from scratch on accumulated data equals
/// incremental training from `init` on the new data. Identical episodes are
/// collapsed into one weighted pass.
class ExemplarTrainer : public Trainer {
public:
    ModelHandle train(const TrainRequest& request) override;
};

/// Runs `<command> --train <path> --valid <path> --init <checkpoint> --role both
/// --schema-aware {true|false}` through /bin/sh and expects a line
/// `CHECKPOINT <path>` on stdout and exit status 0.
class ExternalCommandTrainer : public Trainer {
public:
    ExternalCommandTrainer(std::string command, std::chrono::seconds timeout)
        : command_(std::move(command)), timeout_(timeout) {}
    ModelHandle train(const TrainRequest& request) override;

private:
    std::string command_;
    std::chrono::seconds timeout_;
};

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string output;
};

/// Runs a shell command, capturing stdout; kills it after `timeout`.
ProcessResult run_process(const std::string& command, std::chrono::seconds timeout);

/// Persisted form of a handle; exemplar stores are written to `store_path`
/// and recorded relative to `base` when one is given.
nlohmann::json save_handle(const ModelHandle& handle, const std::filesystem::path& store_path,
                           const std::filesystem::path& base = {});
/// Relative exemplar paths are resolved against `base`.
ModelHandle load_handle(const nlohmann::json& j, const std::filesystem::path& base = {});

std::string shell_quote(const std::string& s);

}  // namespace todsim
