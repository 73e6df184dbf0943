#pragma once

// Synthetic task worlds: a catalog of domains with intents and slots, goals
// with random slot values, "human" episodes produced by the scripted pair,
// and the API table answering every goal.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "todsim/data_io.hpp"
#include "todsim/mock_api.hpp"
#include "todsim/sampling.hpp"

namespace todsim {

struct IntentSpec {
    std::string intent;
    std::vector<std::string> slots;
};

struct DomainSpec {
    std::string name;
    std::vector<IntentSpec> intents;
};

/// Eight ordinary domains followed by the four default holdout domains.
std::vector<DomainSpec> standard_domains();
/// Ten further domains used as the out-of-domain side of active learning.
std::vector<DomainSpec> extra_domains();

struct WorldConfig {
    std::vector<DomainSpec> domains = standard_domains();
    int train_per_intent = 8;
    int valid_per_intent = 2;
    int test_per_intent = 4;
    std::uint64_t seed = 0;
};

struct World {
    std::vector<DomainSpec> domains;
    std::vector<ApiSchema> schemas;
    std::map<std::string, std::string> intent_domains;
    std::vector<Episode> human;
    ApiTable api;

    std::vector<std::string> intents_of(const std::set<std::string>& domain_names) const;
};

/// Random goal for an intent; values are drawn from a fixed word list.
ApiCall random_goal(const IntentSpec& spec, Rng& rng);

/// Scripted schema-aware conversation for `goal`, greedy, revealing one or
/// two slots per turn depending on `rng`.
Episode human_episode(const ApiCall& goal, Rng& rng);

World make_world(const WorldConfig& config);

/// Goals of the world's human episodes in the given domains and fold.
std::vector<ApiCall> goals_of(const World& world, const std::set<std::string>& domains, Fold fold);

}  // namespace todsim
