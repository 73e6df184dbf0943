#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "todsim/dialogue.hpp"

namespace todsim {

enum class Role { User, Assistant };
enum class DecodeMode { Greedy, Nucleus };

std::string_view to_string(Role r) noexcept;
std::string_view to_string(DecodeMode m) noexcept;
Role role_from_string(std::string_view s);
DecodeMode decode_mode_from_string(std::string_view s);

inline constexpr double kDefaultNucleusP = 0.9;

struct DecodeConfig {
    DecodeMode mode = DecodeMode::Nucleus;
    double p = kDefaultNucleusP;  // ignored by Greedy
    std::uint64_t seed = 0;

    friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

/// What an agent sees when asked to act. `grounding` is only set on the
/// agent's first observation of a dialogue: the serialized goal for the User,
/// the serialized schema for a schema-aware Assistant.
struct Observation {
    Role role = Role::User;
    std::optional<std::string> grounding;
    std::vector<Turn> history;
    DecodeConfig decode;
};

/// Uniform act-on-observation contract. One instance serves one dialogue.
///
/// An Assistant observed right after a User turn may answer with a serialized
/// APICALL (a call this round), any other text (its utterance, no call), or
/// the empty string (no call and nothing to say). Observed right after an
/// ApiResp turn it answers with its utterance. A User may answer `[DONE]`.
class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string act(const Observation& obs) = 0;
};

using AgentFactory = std::function<std::unique_ptr<Agent>()>;

/// Helpers over dialogue histories shared by the built-in agents.
namespace history {

/// Index of the last turn spoken by `speaker`, if any.
std::optional<std::size_t> last_index(const std::vector<Turn>& turns, Speaker speaker);

/// Text of the last AssistantUtt, or empty.
std::string last_assistant_utterance(const std::vector<Turn>& turns);

/// Response of the last API call made since the last User turn (the User
/// sees it in the round that just ended).
std::optional<ApiResponse> response_in_last_round(const std::vector<Turn>& turns);

/// Informed slot values across all User turns (later mentions win).
SlotMap user_informs(const std::vector<Turn>& turns);

/// Serialized calls made so far.
std::vector<std::string> calls_made(const std::vector<Turn>& turns);

}  // namespace history

}  // namespace todsim
