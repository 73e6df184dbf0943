#pragma once

// Independent reference implementations used to check the metric code.
// Deliberately naive: positional n-gram enumeration and big-integer sums.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using Sentence = std::vector<std::string>;

inline std::vector<Sentence> ngrams(const Sentence& s, std::size_t n) {
    std::vector<Sentence> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + i, s.begin() + i + n);
    return out;
}

/// Clipped matches by consuming reference n-grams one at a time.
inline std::size_t clipped_matches(const Sentence& hyp, const Sentence& ref, std::size_t n) {
    auto pool = ngrams(ref, n);
    std::vector<bool> used(pool.size(), false);
    std::size_t hits = 0;
    for (const auto& g : ngrams(hyp, n)) {
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (!used[j] && pool[j] == g) {
                used[j] = true;
                ++hits;
                break;
            }
        }
    }
    return hits;
}

inline double bleu4(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
    long double hyp_len = 0, ref_len = 0;
    long double log_p = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        long double m = 0, t = 0;
        for (std::size_t i = 0; i < hyps.size(); ++i) {
            m += clipped_matches(hyps[i], refs[i], n);
            t += ngrams(hyps[i], n).size();
        }
        if (m == 0) m = 1e-9L;
        if (t == 0) t = 1;
        log_p += std::log(m / t) / 4;
    }
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        hyp_len += hyps[i].size();
        ref_len += refs[i].size();
    }
    if (hyp_len == 0) return 0.0;
    const long double bp = hyp_len < ref_len ? std::exp(1 - ref_len / hyp_len) : 1.0L;
    return static_cast<double>(bp * std::exp(log_p));
}

/// 2 * sum_{i >= max(k, n-k)} C(n, i) / 2^n, capped at 1, in exact integers
/// until the final division.
inline double binomial_p(std::uint64_t k, std::uint64_t n) {
    using boost::multiprecision::cpp_int;
    using Float = boost::multiprecision::cpp_dec_float_100;
    const std::uint64_t lo = std::max(k, n - k);
    cpp_int c = 1;  // C(n, 0)
    cpp_int tail = 0;
    for (std::uint64_t i = 0; i <= n; ++i) {
        if (i >= lo) tail += c;
        c = c * (n - i) / (i + 1);
    }
    const cpp_int total = cpp_int(1) << n;
    Float p = Float(cpp_int(2 * tail)) / Float(total);
    if (p > 1) p = 1;
    return p.convert_to<double>();
}

}  // namespace oracle
