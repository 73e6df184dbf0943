#include "todsim/active_learning.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "todsim/error.hpp"
#include "todsim/hash.hpp"
#include "todsim/sampling.hpp"

namespace todsim {

namespace {

struct Drawn {
    std::vector<Episode> episodes;
    std::string warning;
};

Drawn round_robin(const std::vector<std::string>& intents, std::span<const Episode> pool, std::size_t k,
                  std::uint64_t seed, const std::set<std::string>& used, const char* which) {
    std::vector<std::vector<const Episode*>> queues(intents.size());
    for (std::size_t i = 0; i < intents.size(); ++i) {
        for (const auto& e : pool) {
            if (e.goal && e.goal->intent == intents[i] && !used.contains(episode_id(e))) queues[i].push_back(&e);
        }
        Rng rng(derive_seed(seed, fnv1a64(intents[i])));
        rng.shuffle(queues[i]);
    }
    Drawn out;
    std::vector<std::size_t> next(intents.size(), 0);
    for (bool progress = true; out.episodes.size() < k && progress;) {
        progress = false;
        for (std::size_t i = 0; i < intents.size() && out.episodes.size() < k; ++i) {
            if (next[i] >= queues[i].size()) continue;
            out.episodes.push_back(*queues[i][next[i]++]);
            progress = true;
        }
    }
    if (out.episodes.size() < k) {
        out.warning = std::string("InsufficientPool: only ") + std::to_string(out.episodes.size()) + " " + which +
                      " conversations match the selected intents, wanted " + std::to_string(k);
    }
    return out;
}

}  // namespace

SchemaScoreTable rank_schemas(std::span<const Episode> episodes) {
    if (episodes.empty()) throw EmptyInput("no episodes to rank");
    SchemaScoreTable table;
    for (const auto& [intent, g] : tsr_by_intent(episodes)) table.push_back({intent, g.tsr(), g.goals});
    std::sort(table.begin(), table.end(), [](const SchemaScore& a, const SchemaScore& b) {
        return a.tsr != b.tsr ? a.tsr < b.tsr : a.intent < b.intent;
    });
    return table;
}

AlSelection select_al_batch(const SchemaScoreTable& table, std::span<const Episode> pool_train,
                            std::span<const Episode> pool_valid, std::size_t k_schemas, std::size_t k_convs,
                            std::uint64_t seed, const std::set<std::string>& used) {
    AlSelection sel;
    for (std::size_t i = 0; i < table.size() && i < k_schemas; ++i) sel.intents.push_back(table[i].intent);
    auto train = round_robin(sel.intents, pool_train, k_convs, derive_seed(seed, 0), used, "train");
    auto valid = round_robin(sel.intents, pool_valid, k_convs, derive_seed(seed, 1), used, "valid");
    sel.train_adds = std::move(train.episodes);
    sel.valid_adds = std::move(valid.episodes);
    for (auto* w : {&train.warning, &valid.warning}) {
        if (!w->empty()) sel.warnings.push_back(*w);
    }
    return sel;
}

std::vector<Episode> select_random_fewshot(std::span<const Episode> pool, std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(std::min(n, idx.size()));
    std::sort(idx.begin(), idx.end());
    std::vector<Episode> out;
    for (auto i : idx) out.push_back(pool[i]);
    return out;
}

nlohmann::json to_json(std::span<const AlLedgerEntry> ledger) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : ledger) {
        out.push_back({{"iteration", e.iteration},
                       {"seed", e.seed},
                       {"intents", e.intents},
                       {"train_ids", e.train_ids},
                       {"valid_ids", e.valid_ids},
                       {"warnings", e.warnings}});
    }
    return out;
}

void write_al_ledger(const std::filesystem::path& path, std::span<const AlLedgerEntry> ledger) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(ledger).dump(2) << '\n';
}

AddsHook active_learning_hook(std::vector<Episode> pool_train, std::vector<Episode> pool_valid, AlConfig config,
                              std::vector<AlLedgerEntry>* ledger) {
    return [pool_train = std::move(pool_train), pool_valid = std::move(pool_valid), config, ledger](
               const BootstrapState& state, std::span<const Episode> generated) {
        std::set<std::string> used;
        for (const auto* part : {&state.human_train, &state.human_valid}) {
            for (const auto& e : *part) used.insert(episode_id(e));
        }
        const std::uint64_t seed = derive_seed(config.seed, state.iteration);
        AlSelection sel = select_al_batch(rank_schemas(generated), pool_train, pool_valid, config.k_schemas,
                                          config.k_convs, seed, used);
        if (ledger) {
            AlLedgerEntry entry{state.iteration, seed, sel.intents, {}, {}, sel.warnings};
            for (const auto& e : sel.train_adds) entry.train_ids.push_back(episode_id(e));
            for (const auto& e : sel.valid_adds) entry.valid_ids.push_back(episode_id(e));
            ledger->push_back(std::move(entry));
        }
        return HumanAdds{std::move(sel.train_adds), std::move(sel.valid_adds)};
    };
}

}  // namespace todsim
