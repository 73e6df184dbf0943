#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "todsim/error.hpp"

namespace todsim {

/// Seeded generator with platform-independent derived draws (the standard
/// distributions are implementation-defined, the engine is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform in [0, n); n must be positive.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::mt19937_64 engine_;
};

inline constexpr double kDistributionTolerance = 1e-9;

/// Keeps the smallest prefix of the probability-descending order (stable on
/// ties) whose mass reaches `p`, renormalized. Kept items stay in their input
/// order; with p = 1 the input is returned unchanged.
template <class T>
std::vector<std::pair<T, double>> nucleus_filter(std::span<const std::pair<T, double>> dist, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw InvalidDistribution("nucleus p must lie in (0, 1]");
    if (dist.empty()) throw InvalidDistribution("empty distribution");
    double total = 0.0;
    for (const auto& [item, prob] : dist) {
        if (!(prob >= 0.0) || !std::isfinite(prob)) throw InvalidDistribution("negative or non-finite probability");
        total += prob;
    }
    if (std::abs(total - 1.0) > kDistributionTolerance) throw InvalidDistribution("probabilities do not sum to 1");
    if (p == 1.0) return {dist.begin(), dist.end()};

    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a].second > dist[b].second; });

    std::vector<bool> keep(dist.size(), false);
    double mass = 0.0;
    for (std::size_t idx : order) {
        keep[idx] = true;
        mass += dist[idx].second;
        if (mass >= p - 1e-12) break;
    }

    std::vector<std::pair<T, double>> out;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (keep[i]) out.emplace_back(dist[i].first, dist[i].second / mass);
    }
    return out;
}

template <class T>
std::vector<std::pair<T, double>> nucleus_filter(const std::vector<std::pair<T, double>>& dist, double p) {
    return nucleus_filter(std::span<const std::pair<T, double>>(dist), p);
}

/// Inverse-CDF draw; falls back to the last index on rounding shortfall.
inline std::size_t sample_index(std::span<const double> probs, Rng& rng) {
    const double u = rng.uniform();
    double cdf = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cdf += probs[i];
        if (u < cdf) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
}

}  // namespace todsim
