#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/rational.hpp>
#include <nlohmann/json.hpp>

#include "todsim/agent.hpp"

namespace todsim {

using Rational = boost::rational<std::int64_t>;

struct Fraction {
    std::size_t hits = 0;
    std::size_t total = 0;
    double value() const { return static_cast<double>(hits) / static_cast<double>(total); }
};

/// Mean of Episode::success. Throws EmptyInput.
double task_success_rate(std::span<const Episode> episodes);

struct GroupRate {
    std::size_t successes = 0;
    std::size_t episodes = 0;
    std::size_t goals = 0;  // distinct goals
    double tsr() const { return static_cast<double>(successes) / static_cast<double>(episodes); }
};

/// TSR per goal intent. Episodes without a goal are skipped.
std::map<std::string, GroupRate> tsr_by_intent(std::span<const Episode> episodes);

/// Gold call (or nullopt for a silent round) of every assistant round, in
/// episode order. A round is a User turn followed by assistant turns.
std::vector<std::optional<ApiCall>> gold_round_calls(std::span<const Episode> episodes);

/// Per-round exact match; silent gold with silent hypothesis counts as a
/// hit. With `calls_only` only rounds whose gold has a call are scored.
/// Throws AlignmentError on length mismatch and EmptyInput when nothing is scored.
Fraction joint_goal_accuracy(std::span<const std::optional<ApiCall>> gold,
                             std::span<const std::optional<ApiCall>> hypothesis, bool calls_only = false);

inline constexpr double kBleuEpsilon = 1e-9;

using Tokens = std::vector<std::string>;

/// Corpus BLEU-4, one reference per hypothesis, uniform weights, brevity
/// penalty exp(1 - r/c) when c < r, zero match counts replaced by 1e-9.
double bleu4(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

double token_exact_match(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

/// (new - base) / (1 - base). Throws DegenerateBase when base == 1.
double error_reduction(double base, double updated);
Rational error_reduction(const Rational& base, const Rational& updated);

/// Exact value of a decimal literal such as "0.777".
Rational parse_decimal(const std::string& text);

double calls_per_dialogue(std::span<const Episode> episodes);

/// Teacher-forced predictions of an agent on gold episodes.
struct OfflinePredictions {
    std::vector<std::optional<ApiCall>> assistant_calls;  // one per gold assistant round
    std::vector<Tokens> assistant_hyp, assistant_ref;     // one per gold AssistantUtt
    std::vector<Tokens> user_hyp, user_ref;               // one per gold User turn
};

/// Replays every gold prefix to a fresh agent per episode, greedy decoding.
/// Schema grounding is given to the assistant when `schema_aware`.
OfflinePredictions predict_assistant(std::span<const Episode> gold, const AgentFactory& assistant, bool schema_aware);
OfflinePredictions predict_user(std::span<const Episode> gold, const AgentFactory& user);

struct SchemaMetrics {
    double tsr = 0;
    std::optional<double> jga;
    std::size_t n = 0;  // distinct goals
};

struct MetricReport {
    double tsr = 0;
    std::optional<double> jga;
    std::optional<double> jga_calls_only;
    std::optional<double> bleu4;
    std::optional<double> tem;
    std::map<std::string, SchemaMetrics> per_schema;
    double calls_per_dialogue = 0;
    std::size_t n_episodes = 0;
    std::size_t n_goals = 0;
    std::size_t n_turns = 0;
};

/// Online metrics of simulated episodes.
MetricReport online_report(std::span<const Episode> episodes);

/// Adds offline JGA, BLEU-4 and TEM from teacher-forced predictions.
void add_offline(MetricReport& report, const OfflinePredictions& predictions,
                 std::span<const std::optional<ApiCall>> gold_calls);

nlohmann::json to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);

}  // namespace todsim
