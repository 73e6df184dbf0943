#pragma once

// Core dialogue types and the canonical string grammar for goals, calls,
// schemas and API responses:
//
//   APICALL: api_name = <intent> ; <slot> = <value> ; ...
//   SCHEMA: api_name = <intent> ; slots = <s1>,<s2>,...
//   APIRESP: <slot> = <value> ; ...        (or the sentinel APIRESP: API_FAIL)
//
// Slots are written in lexicographic order. Inside values `;` and `\` are
// escaped as `\;` and `\\`; `=` needs no escape because a clause is split on
// its first `=`.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace todsim {

using SlotMap = std::map<std::string, std::string>;

inline constexpr std::string_view kCallPrefix = "APICALL:";
inline constexpr std::string_view kSchemaPrefix = "SCHEMA:";
inline constexpr std::string_view kResponsePrefix = "APIRESP:";
inline constexpr std::string_view kFailureSentinel = "APIRESP: API_FAIL";
inline constexpr std::string_view kDoneToken = "[DONE]";

/// True for names matching `[A-Za-z0-9_.-]+`.
bool is_token(std::string_view s) noexcept;

std::string trim(std::string_view s);

struct ApiCall {
    std::string intent;
    SlotMap slots;

    friend bool operator==(const ApiCall&, const ApiCall&) = default;
};

struct ApiSchema {
    std::string intent;
    std::set<std::string> slot_names;

    friend bool operator==(const ApiSchema&, const ApiSchema&) = default;
};

class ApiResponse {
public:
    static ApiResponse ok(SlotMap payload) { return ApiResponse(std::move(payload), false); }
    static ApiResponse failure() { return ApiResponse({}, true); }

    bool is_failure() const noexcept { return failed_; }
    const SlotMap& payload() const noexcept { return payload_; }

    friend bool operator==(const ApiResponse&, const ApiResponse&) = default;

private:
    ApiResponse(SlotMap payload, bool failed) : payload_(std::move(payload)), failed_(failed) {}

    SlotMap payload_;
    bool failed_;
};

/// Throws std::invalid_argument when the call violates the token rules.
void validate(const ApiCall& call);

/// Signature of a goal: its intent and slot names.
ApiSchema schema_of(const ApiCall& call);

std::string serialize_call(const ApiCall& call);
ApiCall parse_call(std::string_view text);

/// Intents equal and slot maps equal after trimming values. Case-sensitive.
bool calls_equal(const ApiCall& a, const ApiCall& b);

std::string serialize_schema(const ApiSchema& schema);
ApiSchema parse_schema(std::string_view text);

std::string serialize_response(const ApiResponse& response);
ApiResponse parse_response(std::string_view text);

inline bool looks_like_call(std::string_view text) {
    return trim(text).starts_with(kCallPrefix);
}

enum class Speaker { User, AssistantCall, ApiResp, AssistantUtt };
enum class Fold { Train, Valid, Test };
enum class Origin { Human, Synthetic };

std::string_view to_string(Speaker s) noexcept;
std::string_view to_string(Fold f) noexcept;
std::string_view to_string(Origin o) noexcept;
Speaker speaker_from_string(std::string_view s);
Fold fold_from_string(std::string_view s);
Origin origin_from_string(std::string_view s);

struct Turn {
    Speaker speaker = Speaker::User;
    std::string text;

    bool is_done() const { return speaker == Speaker::User && text == kDoneToken; }

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct Episode {
    std::optional<ApiCall> goal;
    std::optional<ApiSchema> schema;
    std::vector<Turn> turns;
    bool success = false;
    std::string domain;
    Fold fold = Fold::Train;
    Origin origin = Origin::Synthetic;

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Checks the round grammar `(User (AssistantCall ApiResp)? AssistantUtt)* User?`
/// and that `[DONE]` only appears as the final turn. Returns a description
/// of the first violation, or nullopt.
std::optional<std::string> check_turn_cycle(const std::vector<Turn>& turns);

/// True iff some AssistantCall turn parses to a call equal to the goal.
bool recompute_success(const Episode& episode);

/// Number of AssistantCall turns.
std::size_t count_calls(const Episode& episode);

/// Domain labels of a possibly multi-domain episode (comma separated).
std::vector<std::string> domain_labels(const Episode& episode);

nlohmann::json to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& j);

/// Canonical single-line JSON form (sorted keys, no trailing newline).
std::string to_jsonl_line(const Episode& episode);

/// Content-addressed id: hash of the canonical line.
std::string episode_id(const Episode& episode);

}  // namespace todsim
