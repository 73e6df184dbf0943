#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "todsim/dialogue.hpp"

namespace todsim {

/// Canonical JSONL, one episode per line. Blank lines are skipped; a bad
/// line raises ParseError carrying its 1-based line number.
std::vector<Episode> load_episodes(const std::filesystem::path& path);
void write_episodes(const std::filesystem::path& path, std::span<const Episode> episodes);

std::vector<Episode> parse_episodes(std::string_view text);
std::string format_episodes(std::span<const Episode> episodes);

inline const std::set<std::string> kDefaultHoldoutDomains = {"Home Search", "Messaging", "Payment", "Rental Cars"};

struct FoldedEpisodes {
    std::vector<Episode> train, valid, test;

    std::vector<Episode>& operator[](Fold f);
    const std::vector<Episode>& operator[](Fold f) const;
    std::size_t size() const { return train.size() + valid.size() + test.size(); }
    std::vector<Episode> all() const;
};

struct DomainSplit {
    std::set<std::string> holdout_domains;
    FoldedEpisodes in_domain;
    FoldedEpisodes out_of_domain;
};

/// An episode is out-of-domain when any of its domain labels is held out.
DomainSplit split_by_domain(std::span<const Episode> episodes,
                            const std::set<std::string>& holdout = kDefaultHoldoutDomains);

struct GoalExtraction {
    std::vector<ApiCall> goals;
    std::size_t skipped_multi_goal = 0;
    std::size_t skipped_no_call = 0;
    std::size_t skipped_unknown_schema = 0;
};

/// One goal per episode whose AssistantCall turns all carry the same call.
/// With `schemas`, goals whose intent has no schema are dropped as well.
GoalExtraction extract_goals(std::span<const Episode> episodes, const std::vector<ApiSchema>* schemas = nullptr);

/// Schemas of the goals in `episodes`, by intent (slot names unioned).
std::vector<ApiSchema> schemas_of(std::span<const ApiCall> goals);

/// Simplified SGD-style layout:
///   schema.json: [{"service_name", "domain"?, "intents": [{"name", "slots": [..]}]}]
///   dialogues_*.json: [{"dialogue_id", "services": [..], "turns": [{"speaker": "USER"|"SYSTEM",
///     "utterance", "service_call"?: {"method", "parameters"}, "service_results"?: [{..}]}]}]
/// A SYSTEM turn with a service call becomes AssistantCall + ApiResp (the
/// first result, or the failure sentinel when there is none) followed by
/// its utterance. The goal is the episode's single distinct call.
std::vector<Episode> import_sgd_like(const std::filesystem::path& schema_file,
                                     std::span<const std::filesystem::path> dialogue_files,
                                     std::vector<ApiSchema>* schemas_out = nullptr);

}  // namespace todsim
