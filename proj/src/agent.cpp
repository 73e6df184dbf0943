#include "todsim/agent.hpp"

#include <stdexcept>

#include "todsim/error.hpp"
#include "todsim/templates.hpp"

namespace todsim {

std::string_view to_string(Role r) noexcept {
    return r == Role::User ? "User" : "Assistant";
}

std::string_view to_string(DecodeMode m) noexcept {
    return m == DecodeMode::Greedy ? "greedy" : "nucleus";
}

Role role_from_string(std::string_view s) {
    if (s == "User") return Role::User;
    if (s == "Assistant") return Role::Assistant;
    throw std::invalid_argument("unknown role '" + std::string(s) + "'");
}

DecodeMode decode_mode_from_string(std::string_view s) {
    if (s == "greedy") return DecodeMode::Greedy;
    if (s == "nucleus") return DecodeMode::Nucleus;
    throw std::invalid_argument("unknown decode mode '" + std::string(s) + "'");
}

namespace history {

std::optional<std::size_t> last_index(const std::vector<Turn>& turns, Speaker speaker) {
    for (std::size_t i = turns.size(); i-- > 0;) {
        if (turns[i].speaker == speaker) return i;
    }
    return std::nullopt;
}

std::string last_assistant_utterance(const std::vector<Turn>& turns) {
    const auto idx = last_index(turns, Speaker::AssistantUtt);
    return idx ? turns[*idx].text : std::string();
}

std::optional<ApiResponse> response_in_last_round(const std::vector<Turn>& turns) {
    const auto user = last_index(turns, Speaker::User);
    const std::size_t from = user ? *user + 1 : 0;
    for (std::size_t i = turns.size(); i-- > from;) {
        if (turns[i].speaker != Speaker::ApiResp) continue;
        try {
            return parse_response(turns[i].text);
        } catch (const ParseError&) {
            return ApiResponse::failure();
        }
    }
    return std::nullopt;
}

SlotMap user_informs(const std::vector<Turn>& turns) {
    SlotMap out;
    for (const Turn& t : turns) {
        if (t.speaker != Speaker::User) continue;
        for (auto& [slot, value] : templates::parse_informs(t.text)) out[slot] = value;
    }
    return out;
}

std::vector<std::string> calls_made(const std::vector<Turn>& turns) {
    std::vector<std::string> out;
    for (const Turn& t : turns) {
        if (t.speaker == Speaker::AssistantCall) out.push_back(t.text);
    }
    return out;
}

}  // namespace history

}  // namespace todsim
