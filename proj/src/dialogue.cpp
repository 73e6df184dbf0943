#include "todsim/dialogue.hpp"

#include <algorithm>
#include <stdexcept>

#include "todsim/error.hpp"
#include "todsim/hash.hpp"

namespace todsim {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";
constexpr std::string_view kApiName = "api_name";
constexpr std::string_view kSlotsKey = "slots";

struct Clause {
    std::string text;  // unescaped
    std::size_t pos;   // offset of the clause in the original input
};

std::string escape_value(std::string_view value) {
    std::string out;
    out.reserve(value.size());
    for (char c : value) {
        if (c == '\\' || c == ';') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

// Strips `prefix` (after leading whitespace) and returns the remaining body
// together with its offset in `text`.
std::pair<std::string_view, std::size_t> strip_prefix(std::string_view text, std::string_view prefix) {
    const auto start = text.find_first_not_of(kWhitespace);
    if (start == std::string_view::npos || text.substr(start, prefix.size()) != prefix) {
        throw ParseError(start == std::string_view::npos ? 0 : start,
                         "expected '" + std::string(prefix) + "' prefix");
    }
    const auto body = start + prefix.size();
    return {text.substr(body), body};
}

std::vector<Clause> split_clauses(std::string_view body, std::size_t base) {
    std::vector<Clause> clauses;
    if (body.find_first_not_of(kWhitespace) == std::string_view::npos) return clauses;

    Clause cur{{}, base};
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (c == '\\') {
            if (i + 1 >= body.size()) throw ParseError(base + i, "dangling escape");
            const char next = body[i + 1];
            if (next != ';' && next != '\\') throw ParseError(base + i, "invalid escape sequence");
            cur.text.push_back(next);
            ++i;
        } else if (c == ';') {
            clauses.push_back(std::move(cur));
            cur = Clause{{}, base + i + 1};
        } else {
            cur.text.push_back(c);
        }
    }
    clauses.push_back(std::move(cur));
    return clauses;
}

std::pair<std::string, std::string> split_assignment(const Clause& clause) {
    const auto eq = clause.text.find('=');
    if (eq == std::string::npos) {
        if (trim(clause.text).empty()) throw ParseError(clause.pos, "empty clause");
        throw ParseError(clause.pos, "expected '=' in clause");
    }
    std::string name = trim(std::string_view(clause.text).substr(0, eq));
    if (!is_token(name)) throw ParseError(clause.pos, "invalid name '" + name + "'");
    return {std::move(name), trim(std::string_view(clause.text).substr(eq + 1))};
}

std::string parse_api_name(const std::vector<Clause>& clauses, std::size_t body_pos) {
    if (clauses.empty()) throw ParseError(body_pos, "missing api_name clause");
    auto [name, value] = split_assignment(clauses.front());
    if (name != kApiName) throw ParseError(clauses.front().pos, "missing api_name clause");
    if (!is_token(value)) throw ParseError(clauses.front().pos, "invalid intent '" + value + "'");
    return value;
}

SlotMap parse_slot_clauses(const std::vector<Clause>& clauses, std::size_t first) {
    SlotMap slots;
    for (std::size_t i = first; i < clauses.size(); ++i) {
        auto [name, value] = split_assignment(clauses[i]);
        if (name == kApiName || !slots.emplace(name, std::move(value)).second) {
            throw ParseError(clauses[i].pos, "duplicate slot '" + name + "'");
        }
    }
    return slots;
}

void append_slots(std::string& out, const SlotMap& slots) {
    for (const auto& [name, value] : slots) {
        out += " ; ";
        out += name;
        out += " = ";
        out += escape_value(trim(value));
    }
}

}  // namespace

bool is_token(std::string_view s) noexcept {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               c == '.' || c == '-';
    });
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(kWhitespace);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(kWhitespace);
    return std::string(s.substr(b, e - b + 1));
}

void validate(const ApiCall& call) {
    if (!is_token(call.intent)) throw std::invalid_argument("invalid intent '" + call.intent + "'");
    for (const auto& [name, value] : call.slots) {
        if (!is_token(name) || name == kApiName) throw std::invalid_argument("invalid slot name '" + name + "'");
    }
}

ApiSchema schema_of(const ApiCall& call) {
    ApiSchema schema{call.intent, {}};
    for (const auto& [name, value] : call.slots) schema.slot_names.insert(name);
    return schema;
}

std::string serialize_call(const ApiCall& call) {
    std::string out(kCallPrefix);
    out += " api_name = ";
    out += call.intent;
    append_slots(out, call.slots);
    return out;
}

ApiCall parse_call(std::string_view text) {
    const auto [body, pos] = strip_prefix(text, kCallPrefix);
    const auto clauses = split_clauses(body, pos);
    ApiCall call;
    call.intent = parse_api_name(clauses, pos);
    call.slots = parse_slot_clauses(clauses, 1);
    return call;
}

bool calls_equal(const ApiCall& a, const ApiCall& b) {
    if (a.intent != b.intent || a.slots.size() != b.slots.size()) return false;
    return std::equal(a.slots.begin(), a.slots.end(), b.slots.begin(), [](const auto& x, const auto& y) {
        return x.first == y.first && trim(x.second) == trim(y.second);
    });
}

std::string serialize_schema(const ApiSchema& schema) {
    std::string out(kSchemaPrefix);
    out += " api_name = ";
    out += schema.intent;
    if (!schema.slot_names.empty()) {
        out += " ; slots = ";
        bool first = true;
        for (const auto& name : schema.slot_names) {
            if (!first) out += ',';
            out += name;
            first = false;
        }
    }
    return out;
}

ApiSchema parse_schema(std::string_view text) {
    const auto [body, pos] = strip_prefix(text, kSchemaPrefix);
    const auto clauses = split_clauses(body, pos);
    ApiSchema schema;
    schema.intent = parse_api_name(clauses, pos);
    if (clauses.size() > 2) throw ParseError(clauses[2].pos, "unexpected clause after slots");
    if (clauses.size() == 2) {
        auto [name, list] = split_assignment(clauses[1]);
        if (name != kSlotsKey) throw ParseError(clauses[1].pos, "expected 'slots' clause");
        std::string_view rest = list;
        while (!trim(rest).empty()) {
            const auto comma = rest.find(',');
            std::string slot = trim(rest.substr(0, comma));
            if (!is_token(slot)) throw ParseError(clauses[1].pos, "invalid slot name '" + slot + "'");
            if (!schema.slot_names.insert(slot).second) {
                throw ParseError(clauses[1].pos, "duplicate slot '" + slot + "'");
            }
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
    }
    return schema;
}

std::string serialize_response(const ApiResponse& response) {
    if (response.is_failure()) return std::string(kFailureSentinel);
    std::string out(kResponsePrefix);
    if (response.payload().empty()) return out;
    bool first = true;
    for (const auto& [name, value] : response.payload()) {
        out += first ? " " : " ; ";
        out += name;
        out += " = ";
        out += escape_value(trim(value));
        first = false;
    }
    return out;
}

ApiResponse parse_response(std::string_view text) {
    const auto [body, pos] = strip_prefix(text, kResponsePrefix);
    if (trim(body) == "API_FAIL") return ApiResponse::failure();
    return ApiResponse::ok(parse_slot_clauses(split_clauses(body, pos), 0));
}

std::string_view to_string(Speaker s) noexcept {
    switch (s) {
        case Speaker::User: return "User";
        case Speaker::AssistantCall: return "AssistantCall";
        case Speaker::ApiResp: return "ApiResp";
        case Speaker::AssistantUtt: return "AssistantUtt";
    }
    return "?";
}

std::string_view to_string(Fold f) noexcept {
    switch (f) {
        case Fold::Train: return "Train";
        case Fold::Valid: return "Valid";
        case Fold::Test: return "Test";
    }
    return "?";
}

std::string_view to_string(Origin o) noexcept {
    return o == Origin::Human ? "Human" : "Synthetic";
}

Speaker speaker_from_string(std::string_view s) {
    for (auto sp : {Speaker::User, Speaker::AssistantCall, Speaker::ApiResp, Speaker::AssistantUtt}) {
        if (to_string(sp) == s) return sp;
    }
    throw std::invalid_argument("unknown speaker '" + std::string(s) + "'");
}

Fold fold_from_string(std::string_view s) {
    for (auto f : {Fold::Train, Fold::Valid, Fold::Test}) {
        if (to_string(f) == s) return f;
    }
    throw std::invalid_argument("unknown fold '" + std::string(s) + "'");
}

Origin origin_from_string(std::string_view s) {
    if (s == "Human") return Origin::Human;
    if (s == "Synthetic") return Origin::Synthetic;
    throw std::invalid_argument("unknown origin '" + std::string(s) + "'");
}

std::optional<std::string> check_turn_cycle(const std::vector<Turn>& turns) {
    enum class Expect { User, CallOrUtt, Resp, Utt } expect = Expect::User;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const Turn& t = turns[i];
        const bool last = i + 1 == turns.size();
        switch (expect) {
            case Expect::User:
                if (t.speaker != Speaker::User) return "turn " + std::to_string(i) + ": expected User";
                if (t.is_done() && !last) return "turn " + std::to_string(i) + ": [DONE] before the end";
                expect = Expect::CallOrUtt;
                break;
            case Expect::CallOrUtt:
                if (t.speaker == Speaker::AssistantCall) {
                    expect = Expect::Resp;
                } else if (t.speaker == Speaker::AssistantUtt) {
                    expect = Expect::User;
                } else {
                    return "turn " + std::to_string(i) + ": expected AssistantCall or AssistantUtt";
                }
                break;
            case Expect::Resp:
                if (t.speaker != Speaker::ApiResp) return "turn " + std::to_string(i) + ": expected ApiResp";
                expect = Expect::Utt;
                break;
            case Expect::Utt:
                if (t.speaker != Speaker::AssistantUtt) return "turn " + std::to_string(i) + ": expected AssistantUtt";
                expect = Expect::User;
                break;
        }
    }
    if (expect == Expect::Resp || expect == Expect::Utt) return std::string("incomplete final round");
    return std::nullopt;
}

bool recompute_success(const Episode& episode) {
    if (!episode.goal) return false;
    for (const Turn& t : episode.turns) {
        if (t.speaker != Speaker::AssistantCall) continue;
        try {
            if (calls_equal(parse_call(t.text), *episode.goal)) return true;
        } catch (const ParseError&) {
        }
    }
    return false;
}

std::size_t count_calls(const Episode& episode) {
    return static_cast<std::size_t>(std::count_if(episode.turns.begin(), episode.turns.end(),
                                                   [](const Turn& t) { return t.speaker == Speaker::AssistantCall; }));
}

std::vector<std::string> domain_labels(const Episode& episode) {
    std::vector<std::string> out;
    std::string_view rest = episode.domain;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        auto label = trim(rest.substr(0, comma));
        if (!label.empty()) out.push_back(std::move(label));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

nlohmann::json to_json(const Episode& episode) {
    nlohmann::json turns = nlohmann::json::array();
    for (const Turn& t : episode.turns) {
        turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
    }
    return {
        {"goal", episode.goal ? nlohmann::json(serialize_call(*episode.goal)) : nlohmann::json(nullptr)},
        {"schema", episode.schema ? nlohmann::json(serialize_schema(*episode.schema)) : nlohmann::json(nullptr)},
        {"turns", std::move(turns)},
        {"success", episode.success},
        {"domain", episode.domain},
        {"fold", to_string(episode.fold)},
        {"origin", to_string(episode.origin)},
    };
}

Episode episode_from_json(const nlohmann::json& j) {
    Episode e;
    if (!j.at("goal").is_null()) e.goal = parse_call(j.at("goal").get<std::string>());
    if (!j.at("schema").is_null()) e.schema = parse_schema(j.at("schema").get<std::string>());
    for (const auto& t : j.at("turns")) {
        e.turns.push_back({speaker_from_string(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    e.success = j.at("success").get<bool>();
    e.domain = j.at("domain").get<std::string>();
    e.fold = fold_from_string(j.at("fold").get<std::string>());
    e.origin = origin_from_string(j.at("origin").get<std::string>());
    return e;
}

std::string to_jsonl_line(const Episode& episode) {
    return to_json(episode).dump();
}

std::string episode_id(const Episode& episode) {
    return hex64(fnv1a64(to_jsonl_line(episode)));
}

}  // namespace todsim
