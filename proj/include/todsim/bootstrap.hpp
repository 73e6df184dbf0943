#pragma once

// Iterated self-play: generate with the schema-aware pair, keep successful
// conversations, hold out a tenth of the goals for validation, accumulate,
// and retrain the schema-aware and schema-agnostic models on the
// accumulated synthetic data plus the in-domain data.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/metrics.hpp"
#include "todsim/orchestrator.hpp"
#include "todsim/scripted_agents.hpp"
#include "todsim/trainer.hpp"

namespace todsim {

using AgentBuilder = std::function<AgentFactory(const ModelHandle&, Role)>;

/// Exemplar agents for in-memory handles; throws AgentUnavailable otherwise.
AgentFactory exemplar_agents(const ModelHandle& handle, Role role);

struct BootstrapConfig {
    BootstrapConfig();

    /// Schema-aware generation; nucleus p = 0.9 and 20 rollouts by default.
    SimConfig generation;
    /// Schema-agnostic evaluation; greedy, one rollout by default.
    SimConfig evaluation;

    std::shared_ptr<const ApiTable> api;
    std::vector<ApiCall> goals;
    std::vector<ApiCall> eval_goals;
    std::vector<ApiCall> in_domain_eval_goals;
    std::vector<Episode> in_domain_train;
    std::vector<Episode> in_domain_valid;
    /// Optional gold episodes for offline JGA / BLEU-4 / TEM.
    std::vector<Episode> eval_gold;
    std::map<std::string, std::string> intent_domains;
    /// Applied to the generating User only.
    std::optional<NoiseOptions> generation_user_noise;

    double valid_fraction = 0.1;
    std::uint64_t seed = 0;
    /// Snapshot directory; empty disables snapshots and resumption.
    std::filesystem::path workdir;
    AgentBuilder agents = exemplar_agents;
};

struct IterationReport {
    int iteration = 0;
    MetricReport ood;
    std::optional<MetricReport> in_domain;
    /// Per-intent TSR of this iteration's generation batch.
    std::map<std::string, double> generation_tsr;
    std::size_t generated = 0;
    std::size_t successes = 0;
    std::size_t train_added = 0;
    std::size_t valid_added = 0;
    std::optional<double> valid_tem;
};

nlohmann::json to_json(const IterationReport& r);
IterationReport iteration_report_from_json(const nlohmann::json& j);

struct BootstrapState {
    int iteration = 0;
    std::vector<Episode> synthetic_train;
    std::vector<Episode> synthetic_valid;
    /// Human conversations added along the way (active learning).
    std::vector<Episode> human_train;
    std::vector<Episode> human_valid;
    ModelHandle schema_aware;
    ModelHandle schema_agnostic;
    std::optional<IterationReport> baseline;
    std::vector<IterationReport> history;
    std::vector<std::string> warnings;
};

/// Goals held out for validation: the round(n * fraction) distinct goals
/// with the smallest content hash.
std::set<std::string> validation_goals(std::span<const ApiCall> goals, double fraction);

struct HumanAdds {
    std::vector<Episode> train;
    std::vector<Episode> valid;
};

/// Called with the state and the generation batch before retraining.
using AddsHook = std::function<HumanAdds(const BootstrapState&, std::span<const Episode> generated)>;

/// Trains both variants on the in-domain data alone and evaluates the
/// schema-agnostic one (iteration 0).
BootstrapState initial_state(const BootstrapConfig& cfg, Trainer& trainer);

IterationReport evaluate(const BootstrapState& state, const BootstrapConfig& cfg);

BootstrapState bootstrap_iteration(BootstrapState state, const BootstrapConfig& cfg, Trainer& trainer,
                                   const AddsHook& adds = {});

/// Folds bootstrap_iteration `n` times from initial_state. With a workdir,
/// writes iter_<k>/ snapshots and resumes from the latest complete one.
BootstrapState run_bootstrap(int n_iterations, const BootstrapConfig& cfg, Trainer& trainer,
                             const AddsHook& adds = {});

void save_snapshot(const BootstrapState& state, const std::filesystem::path& dir);
BootstrapState load_snapshot(const std::filesystem::path& dir);

}  // namespace todsim
