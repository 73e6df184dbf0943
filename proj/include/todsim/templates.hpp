#pragma once

// Fixed utterance inventory shared by the scripted agents. Slot extraction
// between scripted agents is exact because both sides use these forms.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace todsim::templates {

inline constexpr std::string_view kConfirmed = "Your request is confirmed .";
inline constexpr std::string_view kApology = "Sorry , that did not work .";
inline constexpr std::string_view kProceed = "That is all , please go ahead .";
inline constexpr std::string_view kOpening = "How can I help you ?";

/// "I need the <slot> to be <value> ."
std::string inform(std::string_view slot, std::string_view value);
/// "What <slot> would you like ?"
std::string request(std::string_view slot);
/// "I do not care about the <slot> ."
std::string dont_care(std::string_view slot);
/// "I want to <intent> ."
std::string want(std::string_view intent);

/// All (slot, value) pairs stated with the inform form, in order of appearance.
std::vector<std::pair<std::string, std::string>> parse_informs(std::string_view text);
std::optional<std::string> parse_request(std::string_view text);
std::optional<std::string> parse_dont_care(std::string_view text);
std::optional<std::string> parse_want(std::string_view text);

/// Whitespace tokenization used by BLEU, exemplar contexts and lexicons.
std::vector<std::string> tokenize(std::string_view text);

/// Words of the template inventory; never treated as content tokens.
bool is_function_word(std::string_view token);

}  // namespace todsim::templates
