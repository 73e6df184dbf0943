#include "todsim/templates.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace todsim::templates {

namespace {

constexpr std::string_view kInformHead = "I need the ";
constexpr std::string_view kInformMid = " to be ";
constexpr std::string_view kInformTail = " .";

std::optional<std::string> match_wrapped(std::string_view text, std::string_view head, std::string_view tail) {
    if (!text.starts_with(head) || !text.ends_with(tail) || text.size() <= head.size() + tail.size()) {
        return std::nullopt;
    }
    auto middle = text.substr(head.size(), text.size() - head.size() - tail.size());
    if (middle.find(' ') != std::string_view::npos) return std::nullopt;
    return std::string(middle);
}

}  // namespace

std::string inform(std::string_view slot, std::string_view value) {
    std::string out(kInformHead);
    out += slot;
    out += kInformMid;
    out += value;
    out += kInformTail;
    return out;
}

std::string request(std::string_view slot) {
    return "What " + std::string(slot) + " would you like ?";
}

std::string dont_care(std::string_view slot) {
    return "I do not care about the " + std::string(slot) + " .";
}

std::string want(std::string_view intent) {
    return "I want to " + std::string(intent) + " .";
}

std::vector<std::pair<std::string, std::string>> parse_informs(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t pos = 0;
    while ((pos = text.find(kInformHead, pos)) != std::string_view::npos) {
        const auto slot_begin = pos + kInformHead.size();
        const auto mid = text.find(kInformMid, slot_begin);
        if (mid == std::string_view::npos) break;
        const auto slot = text.substr(slot_begin, mid - slot_begin);
        const auto value_begin = mid + kInformMid.size();
        // The value runs to the next " ." that ends the sentence.
        auto tail = text.find(kInformTail, value_begin);
        while (tail != std::string_view::npos && tail + kInformTail.size() < text.size() &&
               text[tail + kInformTail.size()] != ' ') {
            tail = text.find(kInformTail, tail + 1);
        }
        if (tail == std::string_view::npos) break;
        if (!slot.empty() && slot.find(' ') == std::string_view::npos) {
            out.emplace_back(std::string(slot), std::string(text.substr(value_begin, tail - value_begin)));
        }
        pos = tail + kInformTail.size();
    }
    return out;
}

std::optional<std::string> parse_request(std::string_view text) {
    return match_wrapped(text, "What ", " would you like ?");
}

std::optional<std::string> parse_dont_care(std::string_view text) {
    return match_wrapped(text, "I do not care about the ", " .");
}

std::optional<std::string> parse_want(std::string_view text) {
    return match_wrapped(text, "I want to ", " .");
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const auto start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

bool is_function_word(std::string_view token) {
    static constexpr std::array<std::string_view, 35> kWords = {
        ".", ",", "?", "!", "I", "need", "the", "to", "be", "What", "would", "you", "like",
        "do", "not", "care", "about", "want", "Your", "request", "is", "confirmed", "Sorry",
        "that", "did", "work", "That", "all", "please", "go", "ahead", "How", "can", "help", "[DONE]"};
    return std::find(kWords.begin(), kWords.end(), token) != kWords.end();
}

}  // namespace todsim::templates
