#include "todsim/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "todsim/error.hpp"
#include "todsim/templates.hpp"

namespace todsim {

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

std::optional<ApiCall> parse_hypothesis(const std::string& text) {
    if (!looks_like_call(text)) return std::nullopt;
    try {
        return parse_call(text);
    } catch (const ParseError&) {
        // A malformed call is still a call: it can never match the gold.
        return ApiCall{"<malformed>", {}};
    }
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

double task_success_rate(std::span<const Episode> episodes) {
    if (episodes.empty()) throw EmptyInput("task success rate of no episodes");
    std::size_t ok = 0;
    for (const auto& e : episodes) ok += e.success ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(episodes.size());
}

std::map<std::string, GroupRate> tsr_by_intent(std::span<const Episode> episodes) {
    std::map<std::string, GroupRate> out;
    std::map<std::string, std::set<std::string>> goals;
    for (const auto& e : episodes) {
        if (!e.goal) continue;
        auto& g = out[e.goal->intent];
        ++g.episodes;
        g.successes += e.success ? 1 : 0;
        goals[e.goal->intent].insert(serialize_call(*e.goal));
    }
    for (auto& [intent, g] : out) g.goals = goals[intent].size();
    return out;
}

std::vector<std::optional<ApiCall>> gold_round_calls(std::span<const Episode> episodes) {
    std::vector<std::optional<ApiCall>> out;
    for (const auto& e : episodes) {
        for (std::size_t i = 0; i < e.turns.size(); ++i) {
            if (e.turns[i].speaker != Speaker::User || i + 1 >= e.turns.size()) continue;
            const Turn& next = e.turns[i + 1];
            if (next.speaker == Speaker::AssistantCall) {
                out.push_back(parse_hypothesis(next.text));
            } else if (next.speaker == Speaker::AssistantUtt) {
                out.push_back(std::nullopt);
            }
        }
    }
    return out;
}

Fraction joint_goal_accuracy(std::span<const std::optional<ApiCall>> gold,
                             std::span<const std::optional<ApiCall>> hypothesis, bool calls_only) {
    if (gold.size() != hypothesis.size()) {
        throw AlignmentError("JGA: " + std::to_string(gold.size()) + " gold rounds but " +
                             std::to_string(hypothesis.size()) + " hypotheses");
    }
    Fraction f;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (calls_only && !gold[i]) continue;
        ++f.total;
        const bool hit = gold[i] ? hypothesis[i] && calls_equal(*gold[i], *hypothesis[i]) : !hypothesis[i];
        f.hits += hit ? 1 : 0;
    }
    if (f.total == 0) throw EmptyInput("JGA over no rounds");
    return f;
}

double bleu4(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
    if (hypotheses.size() != references.size()) throw AlignmentError("BLEU: corpora differ in length");
    if (hypotheses.empty()) throw EmptyInput("BLEU of an empty corpus");
    std::size_t c = 0, r = 0;
    std::array<std::size_t, 4> matches{}, totals{};
    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        c += hypotheses[s].size();
        r += references[s].size();
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto hyp = ngram_counts(hypotheses[s], n);
            const auto ref = ngram_counts(references[s], n);
            for (const auto& [gram, count] : hyp) {
                const auto it = ref.find(gram);
                matches[n - 1] += std::min(count, it == ref.end() ? 0 : it->second);
                totals[n - 1] += count;
            }
        }
    }
    if (c == 0) return 0.0;
    double log_sum = 0;
    for (std::size_t n = 0; n < 4; ++n) {
        const double m = matches[n] > 0 ? static_cast<double>(matches[n]) : kBleuEpsilon;
        const double t = totals[n] > 0 ? static_cast<double>(totals[n]) : 1.0;
        log_sum += std::log(m / t);
    }
    const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * std::exp(log_sum / 4.0);
}

double token_exact_match(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
    if (hypotheses.size() != references.size()) throw AlignmentError("TEM: corpora differ in length");
    if (hypotheses.empty()) throw EmptyInput("TEM of an empty corpus");
    std::size_t same = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) same += hypotheses[i] == references[i] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(hypotheses.size());
}

double error_reduction(double base, double updated) {
    if (base == 1.0) throw DegenerateBase();
    return (updated - base) / (1.0 - base);
}

Rational error_reduction(const Rational& base, const Rational& updated) {
    if (base == Rational(1)) throw DegenerateBase();
    return (updated - base) / (Rational(1) - base);
}

Rational parse_decimal(const std::string& text) {
    const std::string t = trim(text);
    std::size_t i = 0;
    bool negative = false;
    if (i < t.size() && (t[i] == '-' || t[i] == '+')) negative = t[i++] == '-';
    std::int64_t num = 0, den = 1;
    bool dot = false, digits = false;
    for (; i < t.size(); ++i) {
        if (t[i] == '.' && !dot) {
            dot = true;
        } else if (t[i] >= '0' && t[i] <= '9') {
            num = num * 10 + (t[i] - '0');
            if (dot) den *= 10;
            digits = true;
        } else {
            throw std::invalid_argument("not a decimal: " + text);
        }
    }
    if (!digits) throw std::invalid_argument("not a decimal: " + text);
    return Rational(negative ? -num : num, den);
}

double calls_per_dialogue(std::span<const Episode> episodes) {
    if (episodes.empty()) throw EmptyInput("calls per dialogue of no episodes");
    std::size_t calls = 0;
    for (const auto& e : episodes) calls += count_calls(e);
    return static_cast<double>(calls) / static_cast<double>(episodes.size());
}

OfflinePredictions predict_assistant(std::span<const Episode> gold, const AgentFactory& assistant, bool schema_aware) {
    OfflinePredictions out;
    for (const auto& e : gold) {
        auto agent = assistant();
        bool grounded = false;
        const auto ask = [&](std::size_t upto) {
            Observation obs{Role::Assistant, std::nullopt,
                            std::vector<Turn>(e.turns.begin(), e.turns.begin() + static_cast<std::ptrdiff_t>(upto)),
                            DecodeConfig{DecodeMode::Greedy, 1.0, 0}};
            if (!grounded && schema_aware) {
                if (e.schema) {
                    obs.grounding = serialize_schema(*e.schema);
                } else if (e.goal) {
                    obs.grounding = serialize_schema(schema_of(*e.goal));
                }
            }
            grounded = true;
            return agent->act(obs);
        };
        for (std::size_t i = 0; i < e.turns.size(); ++i) {
            const Turn& t = e.turns[i];
            if (t.speaker == Speaker::User && i + 1 < e.turns.size() &&
                (e.turns[i + 1].speaker == Speaker::AssistantCall || e.turns[i + 1].speaker == Speaker::AssistantUtt)) {
                const std::string reply = ask(i + 1);
                out.assistant_calls.push_back(parse_hypothesis(reply));
            }
            if (t.speaker == Speaker::AssistantUtt) {
                std::string reply = ask(i);
                if (looks_like_call(reply)) reply.clear();
                out.assistant_hyp.push_back(templates::tokenize(reply));
                out.assistant_ref.push_back(templates::tokenize(t.text));
            }
        }
    }
    return out;
}

OfflinePredictions predict_user(std::span<const Episode> gold, const AgentFactory& user) {
    OfflinePredictions out;
    for (const auto& e : gold) {
        if (!e.goal) continue;
        auto agent = user();
        bool grounded = false;
        for (std::size_t i = 0; i < e.turns.size(); ++i) {
            if (e.turns[i].speaker != Speaker::User) continue;
            Observation obs{Role::User, std::nullopt,
                            std::vector<Turn>(e.turns.begin(), e.turns.begin() + static_cast<std::ptrdiff_t>(i)),
                            DecodeConfig{DecodeMode::Greedy, 1.0, 0}};
            if (!grounded) obs.grounding = serialize_call(*e.goal);
            grounded = true;
            out.user_hyp.push_back(templates::tokenize(agent->act(obs)));
            out.user_ref.push_back(templates::tokenize(e.turns[i].text));
        }
    }
    return out;
}

MetricReport online_report(std::span<const Episode> episodes) {
    MetricReport r;
    r.tsr = task_success_rate(episodes);
    r.calls_per_dialogue = calls_per_dialogue(episodes);
    r.n_episodes = episodes.size();
    std::set<std::string> goals;
    for (const auto& e : episodes) {
        r.n_turns += e.turns.size();
        if (e.goal) goals.insert(serialize_call(*e.goal));
    }
    r.n_goals = goals.size();
    for (const auto& [intent, g] : tsr_by_intent(episodes)) r.per_schema[intent] = SchemaMetrics{g.tsr(), {}, g.goals};
    return r;
}

void add_offline(MetricReport& report, const OfflinePredictions& predictions,
                 std::span<const std::optional<ApiCall>> gold_calls) {
    if (!gold_calls.empty()) {
        report.jga = joint_goal_accuracy(gold_calls, predictions.assistant_calls).value();
        const bool any_call = std::any_of(gold_calls.begin(), gold_calls.end(), [](const auto& c) { return c.has_value(); });
        if (any_call) report.jga_calls_only = joint_goal_accuracy(gold_calls, predictions.assistant_calls, true).value();
    }
    if (!predictions.assistant_hyp.empty()) {
        report.bleu4 = bleu4(predictions.assistant_hyp, predictions.assistant_ref);
        report.tem = token_exact_match(predictions.assistant_hyp, predictions.assistant_ref);
    }
}

nlohmann::json to_json(const MetricReport& report) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [intent, m] : report.per_schema) {
        per[intent] = {{"tsr", m.tsr}, {"jga", optional_json(m.jga)}, {"n", m.n}};
    }
    return {
        {"tsr", report.tsr},
        {"jga", optional_json(report.jga)},
        {"jga_calls_only", optional_json(report.jga_calls_only)},
        {"bleu4", optional_json(report.bleu4)},
        {"tem", optional_json(report.tem)},
        {"per_schema", per},
        {"calls_per_dialogue", report.calls_per_dialogue},
        {"n_episodes", report.n_episodes},
        {"n_goals", report.n_goals},
        {"n_turns", report.n_turns},
    };
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport r;
    try {
        r.tsr = j.at("tsr").get<double>();
        r.jga = optional_from(j, "jga");
        r.jga_calls_only = optional_from(j, "jga_calls_only");
        r.bleu4 = optional_from(j, "bleu4");
        r.tem = optional_from(j, "tem");
        for (const auto& [intent, m] : j.at("per_schema").items()) {
            r.per_schema[intent] = SchemaMetrics{m.at("tsr").get<double>(), optional_from(m, "jga"), m.at("n").get<std::size_t>()};
        }
        r.calls_per_dialogue = j.at("calls_per_dialogue").get<double>();
        r.n_episodes = j.at("n_episodes").get<std::size_t>();
        r.n_goals = j.at("n_goals").get<std::size_t>();
        r.n_turns = j.at("n_turns").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed metric report: ") + e.what());
    }
    return r;
}

}  // namespace todsim
