#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "todsim/agent.hpp"
#include "todsim/mock_api.hpp"

namespace todsim {

struct SimConfig {
    /// Rounds, not turns: User -> (call -> response)? -> utterance.
    int max_rounds = 10;
    int rollouts_per_goal = 20;
    DecodeConfig decode;
    bool schema_aware = false;
    /// Worker threads for run_batch.
    int jobs = 1;
};

void validate(const SimConfig& cfg);

/// Called with every Assistant observation before the agent sees it.
using ObservationHook = std::function<void(const Observation&)>;

struct Rollout {
    Episode episode;
    /// Set when an agent failed; the incomplete round is dropped and the
    /// episode counts as unsuccessful.
    std::optional<std::string> error;
};

/// One simulated conversation. `schema` must be present iff cfg.schema_aware.
/// Agents see cfg.decode with its seed replaced by `seed`.
Rollout run_dialogue(Agent& user, Agent& assistant, const ApiTable& api, const ApiCall& goal,
                     const std::optional<ApiSchema>& schema, const SimConfig& cfg, std::uint64_t seed,
                     const ObservationHook& hook = {});

struct BatchOptions {
    /// Labels episodes with the domain of their goal's intent.
    std::map<std::string, std::string> intent_domains;
    /// Must be safe to call from several threads when cfg.jobs > 1.
    ObservationHook assistant_hook;
    /// Receives `goal_idx rollout_idx success n_turns` lines, tab separated.
    std::ostream* progress = nullptr;
};

struct BatchError {
    std::size_t goal_index;
    int rollout_index;
    std::string message;
};

struct BatchResult {
    /// Goal-major, rollout-minor order regardless of completion order.
    std::vector<Episode> episodes;
    std::vector<BatchError> errors;
};

/// Seed of rollout r for goal g.
std::uint64_t rollout_seed(std::uint64_t seed, std::size_t goal_index, int rollout_index);

BatchResult run_batch(std::span<const ApiCall> goals, const AgentFactory& user, const AgentFactory& assistant,
                      const ApiTable& api, const SimConfig& cfg, const BatchOptions& options = {});

}  // namespace todsim
