#pragma once

#include <string>
#include <vector>

#include "todsim/dialogue.hpp"
#include "todsim/sampling.hpp"

namespace test {

inline std::string random_token(todsim::Rng& rng, std::size_t max_len = 8) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-";
    const std::size_t len = 1 + rng.index(max_len);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[rng.index(alphabet.size())]);
    return out;
}

/// Printable value, often containing the grammar's delimiters.
inline std::string random_value(todsim::Rng& rng) {
    static const std::string alphabet = "ab c;=\\xyz,09 ;=\\Q";
    const std::size_t len = 1 + rng.index(12);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[rng.index(alphabet.size())]);
    return todsim::trim(out).empty() ? std::string("v") : todsim::trim(out);
}

inline todsim::SlotMap random_slots(todsim::Rng& rng, std::size_t max_slots = 4) {
    todsim::SlotMap slots;
    const std::size_t n = rng.index(max_slots + 1);
    while (slots.size() < n) {
        const std::string name = random_token(rng);
        if (name == "api_name") continue;
        slots[name] = random_value(rng);
    }
    return slots;
}

inline todsim::ApiCall random_call(todsim::Rng& rng) { return {random_token(rng), random_slots(rng)}; }

}  // namespace test
