#include "todsim/scripted_agents.hpp"

#include <algorithm>
#include <set>

#include "todsim/error.hpp"
#include "todsim/hash.hpp"
#include "todsim/sampling.hpp"
#include "todsim/templates.hpp"

namespace todsim {

namespace {

ApiCall parse_goal_grounding(const std::string& grounding) {
    try {
        return parse_call(grounding);
    } catch (const ParseError& e) {
        throw MalformedGrounding(std::string("user grounding is not a call: ") + e.what());
    }
}

ApiSchema parse_schema_grounding(const std::string& grounding) {
    try {
        return parse_schema(grounding);
    } catch (const ParseError& e) {
        throw MalformedGrounding(std::string("assistant grounding is not a schema: ") + e.what());
    }
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += ' ';
        out += p;
    }
    return out;
}

}  // namespace

std::string ScriptedUser::act(const Observation& obs) {
    if (obs.grounding) goal_ = parse_goal_grounding(*obs.grounding);
    if (!goal_) throw MalformedGrounding("scripted user has no goal");

    if (const auto resp = history::response_in_last_round(obs.history); resp && !resp->is_failure()) {
        return std::string(kDoneToken);
    }

    const SlotMap revealed = history::user_informs(obs.history);
    if (const auto asked = templates::parse_request(history::last_assistant_utterance(obs.history))) {
        const auto it = goal_->slots.find(*asked);
        if (it == goal_->slots.end()) return templates::dont_care(*asked);
        return templates::inform(it->first, it->second);
    }

    std::vector<std::string> parts;
    for (const auto& [slot, value] : goal_->slots) {
        if (static_cast<int>(parts.size()) >= options_.reveal_k) break;
        if (!revealed.contains(slot)) parts.push_back(templates::inform(slot, value));
    }
    if (!parts.empty()) return join(parts);
    if (goal_->slots.empty()) return templates::want(goal_->intent);
    return std::string(templates::kProceed);
}

std::optional<ApiSchema> ScriptedAssistant::infer_schema(const std::vector<Turn>& history) const {
    std::optional<std::string> wanted;
    for (const Turn& t : history) {
        if (t.speaker != Speaker::User) continue;
        if (auto w = templates::parse_want(t.text)) wanted = std::move(w);
    }
    const SlotMap mentioned = history::user_informs(history);

    const ApiSchema* best = nullptr;
    for (const ApiSchema& s : options_.known_schemas) {
        bool fits = false;
        if (wanted) {
            fits = s.intent == *wanted;
        } else if (!mentioned.empty()) {
            fits = std::all_of(mentioned.begin(), mentioned.end(),
                               [&](const auto& kv) { return s.slot_names.contains(kv.first); });
        }
        if (!fits) continue;
        if (!best || s.slot_names.size() < best->slot_names.size() ||
            (s.slot_names.size() == best->slot_names.size() && s.intent < best->intent)) {
            best = &s;
        }
    }
    return best ? std::optional<ApiSchema>(*best) : std::nullopt;
}

std::string ScriptedAssistant::act(const Observation& obs) {
    if (obs.grounding) schema_ = parse_schema_grounding(*obs.grounding);

    if (!obs.history.empty() && obs.history.back().speaker == Speaker::ApiResp) {
        const auto resp = history::response_in_last_round(obs.history);
        return std::string(resp && !resp->is_failure() ? templates::kConfirmed : templates::kApology);
    }

    const auto schema = schema_ ? schema_ : infer_schema(obs.history);
    if (!schema) return std::string(templates::kOpening);

    const SlotMap informed = history::user_informs(obs.history);
    ApiCall call{schema->intent, {}};
    for (const auto& slot : schema->slot_names) {
        const auto it = informed.find(slot);
        if (it == informed.end()) return templates::request(slot);
        call.slots.emplace(slot, it->second);
    }
    std::string text = serialize_call(call);
    const auto made = history::calls_made(obs.history);
    if (std::find(made.begin(), made.end(), text) != made.end()) return std::string(templates::kApology);
    return text;
}

bool NoisyAgent::corrupted(const std::string& slot) {
    if (const auto it = decisions_.find(slot); it != decisions_.end()) return it->second;
    const auto pi = options_.per_intent.find(intent_);
    const double eps = pi != options_.per_intent.end() ? pi->second : options_.epsilon;
    // One stream per slot: the decision does not depend on mention order.
    Rng rng(derive_seed(*seed_, fnv1a64(slot)));
    const bool c = rng.bernoulli(eps);
    decisions_.emplace(slot, c);
    return c;
}

std::string NoisyAgent::act(const Observation& obs) {
    if (!seed_) seed_ = derive_seed(obs.decode.seed, fnv1a64("noise"), static_cast<int>(obs.role));
    if (obs.grounding) {
        try {
            intent_ = obs.role == Role::User ? parse_call(*obs.grounding).intent : parse_schema(*obs.grounding).intent;
        } catch (const ParseError&) {
        }
    }

    std::string out = inner_->act(obs);
    if (looks_like_call(out)) {
        ApiCall call;
        try {
            call = parse_call(out);
        } catch (const ParseError&) {
            return out;
        }
        if (intent_.empty()) intent_ = call.intent;
        for (auto& [slot, value] : call.slots) {
            if (corrupted(slot)) value = corrupt_value(value);
        }
        return serialize_call(call);
    }

    for (const auto& [slot, value] : templates::parse_informs(out)) {
        if (!corrupted(slot)) continue;
        const std::string original = templates::inform(slot, value);
        if (const auto pos = out.find(original); pos != std::string::npos) {
            out.replace(pos, original.size(), templates::inform(slot, corrupt_value(value)));
        }
    }
    return out;
}

AgentFactory scripted_user_factory(ScriptedUserOptions options) {
    return [options] { return std::make_unique<ScriptedUser>(options); };
}

AgentFactory scripted_assistant_factory(ScriptedAssistantOptions options) {
    return [options = std::move(options)] { return std::make_unique<ScriptedAssistant>(options); };
}

AgentFactory noisy_factory(AgentFactory inner, NoiseOptions options) {
    return [inner = std::move(inner), options = std::move(options)] {
        return std::make_unique<NoisyAgent>(inner(), options);
    };
}

}  // namespace todsim
