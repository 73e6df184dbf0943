#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "todsim/agent.hpp"

namespace todsim {

struct ScriptedUserOptions {
    /// Slots revealed per unprompted turn.
    int reveal_k = 1;
};

/// Agenda-style User grounded on its goal. Reveals slots in lexicographic
/// order, answers slot requests, and says `[DONE]` on the first assistant
/// utterance that follows a non-sentinel API response. Never gives up early.
class ScriptedUser : public Agent {
public:
    explicit ScriptedUser(ScriptedUserOptions options = {}) : options_(options) {}
    std::string act(const Observation& obs) override;

private:
    ScriptedUserOptions options_;
    std::optional<ApiCall> goal_;
};

struct ScriptedAssistantOptions {
    /// Used to infer the intent when no schema grounding is given.
    std::vector<ApiSchema> known_schemas;
};

/// Slot-filling Assistant. With a schema it asks for each missing slot and
/// calls once all are filled; without one it infers the schema from
/// `known_schemas` using the slots the User mentioned.
class ScriptedAssistant : public Agent {
public:
    explicit ScriptedAssistant(ScriptedAssistantOptions options = {}) : options_(std::move(options)) {}
    std::string act(const Observation& obs) override;

private:
    std::optional<ApiSchema> infer_schema(const std::vector<Turn>& history) const;

    ScriptedAssistantOptions options_;
    std::optional<ApiSchema> schema_;
};

struct NoiseOptions {
    /// Per-slot corruption probability.
    double epsilon = 0.0;
    /// Overrides epsilon for goals/schemas of these intents.
    std::map<std::string, double> per_intent;
};

/// Corrupts slot values in the wrapped agent's output: values inside APICALL
/// strings and inside inform utterances. The corruption decision is drawn
/// once per slot per dialogue, so a corrupted slot stays corrupted and a goal
/// with n slots succeeds with probability at most (1 - epsilon)^n.
class NoisyAgent : public Agent {
public:
    NoisyAgent(std::unique_ptr<Agent> inner, NoiseOptions options)
        : inner_(std::move(inner)), options_(std::move(options)) {}
    std::string act(const Observation& obs) override;

    static std::string corrupt_value(const std::string& value) { return value + "x"; }

private:
    bool corrupted(const std::string& slot);

    std::unique_ptr<Agent> inner_;
    NoiseOptions options_;
    std::optional<std::uint64_t> seed_;
    std::string intent_;
    std::map<std::string, bool> decisions_;
};

AgentFactory scripted_user_factory(ScriptedUserOptions options = {});
AgentFactory scripted_assistant_factory(ScriptedAssistantOptions options = {});
AgentFactory noisy_factory(AgentFactory inner, NoiseOptions options);

}  // namespace todsim
