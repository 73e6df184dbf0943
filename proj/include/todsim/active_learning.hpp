#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/bootstrap.hpp"

namespace todsim {

struct SchemaScore {
    std::string intent;
    double tsr = 0;
    std::size_t n_goals = 0;
};

/// Ascending by (tsr, intent).
using SchemaScoreTable = std::vector<SchemaScore>;

/// Per-intent TSR of simulated episodes. Throws EmptyInput.
SchemaScoreTable rank_schemas(std::span<const Episode> episodes);

struct AlSelection {
    std::vector<std::string> intents;
    std::vector<Episode> train_adds;
    std::vector<Episode> valid_adds;
    std::vector<std::string> warnings;
};

/// Takes the `k_schemas` worst intents and draws up to `k_convs` train and
/// `k_convs` valid episodes of those intents, round-robin over the intents
/// in rank order, each intent's candidates in seeded random order. Episodes
/// whose id is in `used` are never drawn. A shortfall is reported as an
/// InsufficientPool warning.
AlSelection select_al_batch(const SchemaScoreTable& table, std::span<const Episode> pool_train,
                            std::span<const Episode> pool_valid, std::size_t k_schemas, std::size_t k_convs,
                            std::uint64_t seed, const std::set<std::string>& used = {});

/// Seeded uniform sample without replacement of size min(n, |pool|), in pool order.
std::vector<Episode> select_random_fewshot(std::span<const Episode> pool, std::size_t n, std::uint64_t seed);

struct AlLedgerEntry {
    int iteration = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> intents;
    std::vector<std::string> train_ids;
    std::vector<std::string> valid_ids;
    std::vector<std::string> warnings;
};

nlohmann::json to_json(std::span<const AlLedgerEntry> ledger);
void write_al_ledger(const std::filesystem::path& path, std::span<const AlLedgerEntry> ledger);

struct AlConfig {
    std::size_t k_schemas = 8;
    std::size_t k_convs = 8;
    std::uint64_t seed = 0;
};

/// Bootstrap hook that ranks intents by the TSR of the iteration's
/// generation batch and injects human conversations for the worst ones.
/// Appends one ledger entry per call.
AddsHook active_learning_hook(std::vector<Episode> pool_train, std::vector<Episode> pool_valid, AlConfig config,
                              std::vector<AlLedgerEntry>* ledger);

}  // namespace todsim
