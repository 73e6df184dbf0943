#pragma once

// Retrieval agent trained by storing (context, response) exemplars.
//
// A context is a token multiset: a few dialogue-state features (repeated so
// they carry weight against surface tokens) plus the tokens of the last
// utterance addressed to the agent. Acting scores every stored exemplar of
// the agent's role by log(weight) + sharpness * Jaccard(context, key), takes
// a softmax at temperature 1, realizes each candidate response against the
// current dialogue (slot values are copied from the conversation, never
// invented), merges identical realizations and decodes greedily or with
// nucleus sampling.
//
// Assistant calls take their intent from the schema grounding when present;
// otherwise from the intent lexicon, which maps content tokens of user
// utterances to the intents of calls they co-occurred with. An agent without
// a schema therefore cannot produce an intent it was never trained on.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/agent.hpp"
#include "todsim/sampling.hpp"

namespace todsim {

struct ExemplarEntry {
    Role role = Role::User;
    std::vector<std::uint32_t> context;  // sorted token ids (multiset)
    std::string response;
    std::uint64_t weight = 1;
};

class ExemplarStore {
public:
    /// Inserts a new exemplar or adds `weight` to an identical one.
    void add(Role role, const std::vector<std::string>& context, const std::string& response, std::uint64_t weight = 1);

    /// Records that these user tokens preceded a call to `call.intent`.
    void add_call_evidence(const std::vector<std::string>& user_tokens, const ApiCall& call, std::uint64_t weight = 1);

    /// Intent with the highest normalized vote over the content tokens, ties
    /// broken lexicographically; nullopt when no token is known.
    std::optional<std::string> infer_intent(const std::vector<std::string>& tokens) const;

    /// Slot names observed in calls to `intent`, or nullptr.
    const std::set<std::string>* slots_of(const std::string& intent) const;

    std::span<const ExemplarEntry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::uint64_t total_weight() const noexcept;
    const std::map<std::string, std::map<std::string, std::uint64_t>>& intent_lexicon() const noexcept {
        return lexicon_;
    }

    /// Sorted ids for a context; unknown tokens get ids that match nothing.
    std::vector<std::uint32_t> encode(const std::vector<std::string>& tokens) const;
    const std::string& token(std::uint32_t id) const { return vocab_.at(id); }

    nlohmann::json to_json() const;
    static ExemplarStore from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static ExemplarStore load(const std::filesystem::path& path);

    friend bool operator==(const ExemplarStore& a, const ExemplarStore& b) { return a.to_json() == b.to_json(); }

private:
    std::uint32_t intern(const std::string& token);

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<ExemplarEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<std::string, std::map<std::string, std::uint64_t>> lexicon_;  // token -> intent -> count
    std::map<std::string, std::set<std::string>> intent_slots_;
};

/// Multiset Jaccard: sum of min counts over sum of max counts.
double multiset_jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Context features for an Assistant decision given the turns so far.
/// `required_slots` is the slot set the assistant is trying to fill.
std::vector<std::string> assistant_context(const std::vector<Turn>& history, bool schema_aware,
                                           const std::optional<std::set<std::string>>& required_slots);

/// Context features for a User decision, grounded on its goal.
std::vector<std::string> user_context(const std::vector<Turn>& history, const ApiCall& goal);

enum class TrainRole { User, Assistant, Both };

/// Adds one exemplar per turn of `role` in the episode (Assistant: call and
/// utterance turns) keyed by the preceding context; Assistant call turns
/// also feed the intent lexicon. Existing exemplars are kept.
void train_exemplar(ExemplarStore& store, const Episode& episode, TrainRole role, bool schema_aware = false,
                    std::uint64_t weight = 1);

ExemplarStore train_exemplar(ExemplarStore store, std::span<const Episode> episodes, TrainRole role,
                             bool schema_aware = false);

struct ExemplarOptions {
    /// Multiplier on Jaccard before the temperature-1 softmax.
    double sharpness = 8.0;
    /// Candidates whose unnormalized probability falls below this fraction of
    /// the best are dropped before realization.
    double prune = 1e-7;
};

class ExemplarAgent : public Agent {
public:
    ExemplarAgent(std::shared_ptr<const ExemplarStore> store, Role role, ExemplarOptions options = {});
    std::string act(const Observation& obs) override;

    /// Distribution over realized responses for this observation, before
    /// nucleus filtering (exposed for tests and diagnostics).
    std::vector<std::pair<std::string, double>> distribution(const Observation& obs);

private:
    std::string realize_assistant(const std::string& response, const std::vector<Turn>& history) const;
    std::string realize_user(const std::string& response, const std::vector<Turn>& history) const;
    std::optional<std::string> current_intent(const std::vector<Turn>& history) const;
    std::optional<std::set<std::string>> required_slots(const std::optional<std::string>& intent) const;

    std::shared_ptr<const ExemplarStore> store_;
    Role role_;
    ExemplarOptions options_;
    std::optional<Rng> rng_;
    std::optional<ApiCall> goal_;
    std::optional<ApiSchema> schema_;
};

AgentFactory exemplar_factory(std::shared_ptr<const ExemplarStore> store, Role role, ExemplarOptions options = {});

}  // namespace todsim
