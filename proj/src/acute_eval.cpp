#include "todsim/acute_eval.hpp"

#include <algorithm>
#include <cmath>

#include "todsim/error.hpp"
#include "todsim/hash.hpp"
#include "todsim/sampling.hpp"

namespace todsim {

namespace {

bool mentions_markers(std::string_view text) {
    return text.find(kCallPrefix) != std::string_view::npos || text.find(kResponsePrefix) != std::string_view::npos;
}

nlohmann::json turns_json(const std::vector<Turn>& turns) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : turns) out.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
    return out;
}

std::vector<Turn> turns_from(const nlohmann::json& j) {
    std::vector<Turn> out;
    for (const auto& t : j) {
        out.push_back({speaker_from_string(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    return out;
}

std::string task_id(std::size_t index) {
    std::string digits = std::to_string(index);
    return "task-" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace

std::vector<Turn> presentable_turns(const std::vector<Turn>& turns) {
    std::vector<Turn> out;
    for (const auto& t : turns) {
        if (t.speaker == Speaker::AssistantCall || t.speaker == Speaker::ApiResp || t.is_done()) continue;
        out.push_back({t.speaker, mentions_markers(t.text) ? std::string(kRedacted) : t.text});
    }
    return out;
}

nlohmann::json to_json(const EvalTask& task) {
    return {{"id", task.id},
            {"left_system", task.left_system},
            {"right_system", task.right_system},
            {"left", turns_json(task.left)},
            {"right", turns_json(task.right)},
            {"question", task.question},
            {"is_control", task.is_control},
            {"goal_matched", task.goal_matched},
            {"goal_id", task.goal_id}};
}

EvalTask eval_task_from_json(const nlohmann::json& j) {
    try {
        EvalTask t;
        t.id = j.at("id").get<std::string>();
        t.left_system = j.at("left_system").get<std::string>();
        t.right_system = j.at("right_system").get<std::string>();
        t.left = presentable_turns(turns_from(j.at("left")));
        t.right = presentable_turns(turns_from(j.at("right")));
        t.question = j.at("question").get<std::string>();
        t.is_control = j.at("is_control").get<bool>();
        t.goal_matched = j.at("goal_matched").get<bool>();
        t.goal_id = j.at("goal_id").get<std::string>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed task: ") + e.what());
    }
}

std::string_view to_string(Choice c) noexcept {
    return c == Choice::Left ? "Left" : "Right";
}

Choice choice_from_string(std::string_view s) {
    if (s == "Left") return Choice::Left;
    if (s == "Right") return Choice::Right;
    throw std::invalid_argument("choice must be Left or Right");
}

nlohmann::json to_json(const Annotation& a) {
    return {{"task_id", a.task_id},
            {"annotator_id", a.annotator_id},
            {"choice", to_string(a.choice)},
            {"rationale", a.rationale ? nlohmann::json(*a.rationale) : nlohmann::json(nullptr)},
            {"timestamp", a.timestamp}};
}

Annotation annotation_from_json(const nlohmann::json& j) {
    try {
        Annotation a;
        a.task_id = j.at("task_id").get<std::string>();
        a.annotator_id = j.at("annotator_id").get<std::string>();
        a.choice = choice_from_string(j.at("choice").get<std::string>());
        if (j.contains("rationale") && !j.at("rationale").is_null()) a.rationale = j.at("rationale").get<std::string>();
        a.timestamp = j.value("timestamp", std::string());
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed annotation: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, std::string("malformed annotation: ") + e.what());
    }
}

std::vector<Turn> repetitive_control(const Episode& gold) {
    std::string repeated;
    for (const auto& t : gold.turns) {
        if (t.speaker == Speaker::AssistantUtt && !t.text.empty()) {
            repeated = t.text;
            break;
        }
    }
    std::vector<Turn> out;
    for (const auto& t : gold.turns) {
        if (t.speaker == Speaker::User) out.push_back(t);
        if (t.speaker == Speaker::AssistantUtt) out.push_back({Speaker::AssistantUtt, repeated});
    }
    return presentable_turns(out);
}

std::vector<EvalTask> build_tasks(const std::map<std::string, std::vector<Episode>>& runs,
                                  std::span<const ApiCall> goals, std::span<const Episode> control_gold,
                                  const TaskOptions& options) {
    std::map<std::string, std::map<std::string, const Episode*>> by_goal;
    for (const auto& [system, episodes] : runs) {
        for (const auto& e : episodes) {
            if (e.goal) by_goal[system].try_emplace(serialize_call(*e.goal), &e);
        }
    }
    const auto find = [&](const std::string& system, const std::string& goal) {
        const auto s = by_goal.find(system);
        if (s == by_goal.end()) throw MissingEpisode(system, goal);
        const auto g = s->second.find(goal);
        if (g == s->second.end()) throw MissingEpisode(system, goal);
        return g->second;
    };

    std::vector<std::string> systems;
    for (const auto& [name, episodes] : runs) systems.push_back(name);

    Rng rng(derive_seed(options.seed, fnv1a64("sides")));
    std::vector<EvalTask> comparisons;
    for (std::size_t i = 0; i < systems.size(); ++i) {
        for (std::size_t j = i + 1; j < systems.size(); ++j) {
            for (const auto& goal : goals) {
                const std::string key = serialize_call(goal);
                const Episode* a = find(systems[i], key);
                const Episode* b = find(systems[j], key);
                EvalTask t;
                t.question = options.question;
                t.goal_id = hex64(fnv1a64(key));
                t.left_system = systems[i];
                t.right_system = systems[j];
                t.left = presentable_turns(a->turns);
                t.right = presentable_turns(b->turns);
                if (rng.bernoulli(0.5)) {
                    std::swap(t.left_system, t.right_system);
                    std::swap(t.left, t.right);
                }
                comparisons.push_back(std::move(t));
            }
        }
    }

    std::vector<EvalTask> controls;
    for (std::size_t c = 0; c < options.n_controls && !control_gold.empty(); ++c) {
        const Episode& gold = control_gold[c % control_gold.size()];
        EvalTask t;
        t.question = options.question;
        t.is_control = true;
        t.goal_matched = true;
        t.goal_id = gold.goal ? hex64(fnv1a64(serialize_call(*gold.goal))) : std::string();
        t.left_system = std::string(kGoldSystem);
        t.right_system = std::string(kRepetitiveSystem);
        t.left = presentable_turns(gold.turns);
        t.right = repetitive_control(gold);
        if (rng.bernoulli(0.5)) {
            std::swap(t.left_system, t.right_system);
            std::swap(t.left, t.right);
        }
        controls.push_back(std::move(t));
    }

    // Spread controls evenly through the comparison list.
    std::vector<EvalTask> out;
    const std::size_t total = comparisons.size() + controls.size();
    std::size_t ci = 0, ki = 0;
    for (std::size_t pos = 0; pos < total; ++pos) {
        const bool control_due =
            ki < controls.size() && (ci >= comparisons.size() || (ki * total) / controls.size() <= pos);
        out.push_back(std::move(control_due ? controls[ki++] : comparisons[ci++]));
        out.back().id = task_id(pos);
    }
    return out;
}

std::set<std::string> gate_annotators(std::span<const Annotation> annotations, std::span<const EvalTask> tasks,
                                      std::size_t max_failures) {
    std::map<std::string, const EvalTask*> by_id;
    for (const auto& t : tasks) by_id[t.id] = &t;
    std::map<std::string, std::size_t> failures;
    for (const auto& a : annotations) {
        const auto it = by_id.find(a.task_id);
        if (it == by_id.end() || !it->second->is_control) continue;
        const auto& chosen = a.choice == Choice::Left ? it->second->left_system : it->second->right_system;
        if (chosen == kRepetitiveSystem) ++failures[a.annotator_id];
    }
    std::set<std::string> out;
    for (const auto& [annotator, n] : failures) {
        if (n > max_failures) out.insert(annotator);
    }
    return out;
}

WinMatrix win_matrix(std::span<const Annotation> annotations, std::span<const EvalTask> tasks,
                     const std::set<std::string>& excluded) {
    std::map<std::string, const EvalTask*> by_id;
    std::set<std::string> names;
    for (const auto& t : tasks) {
        by_id[t.id] = &t;
        if (!t.is_control) {
            names.insert(t.left_system);
            names.insert(t.right_system);
        }
    }
    WinMatrix m;
    m.systems.assign(names.begin(), names.end());
    m.excluded_annotators = excluded;
    const std::size_t s = m.systems.size();
    std::vector<std::vector<std::size_t>> won(s, std::vector<std::size_t>(s, 0));
    m.n.assign(s, std::vector<std::size_t>(s, 0));
    const auto index = [&](const std::string& name) {
        return static_cast<std::size_t>(std::lower_bound(m.systems.begin(), m.systems.end(), name) - m.systems.begin());
    };

    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& a : annotations) {
        if (excluded.contains(a.annotator_id)) continue;
        const auto it = by_id.find(a.task_id);
        if (it == by_id.end() || it->second->is_control) continue;
        if (!seen.insert({a.task_id, a.annotator_id}).second) continue;
        const std::size_t l = index(it->second->left_system);
        const std::size_t r = index(it->second->right_system);
        const std::size_t winner = a.choice == Choice::Left ? l : r;
        const std::size_t loser = a.choice == Choice::Left ? r : l;
        ++won[winner][loser];
        ++m.n[l][r];
        ++m.n[r][l];
    }

    m.wins.assign(s, std::vector<std::optional<double>>(s));
    m.significant.assign(s, std::vector<bool>(s, false));
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            if (i == j || m.n[i][j] == 0) continue;
            m.wins[i][j] = static_cast<double>(won[i][j]) / static_cast<double>(m.n[i][j]);
            m.significant[i][j] = binomial_p(won[i][j], m.n[i][j]) < kSignificance;
        }
    }
    return m;
}

nlohmann::json to_json(const WinMatrix& m) {
    nlohmann::json wins = nlohmann::json::array();
    for (const auto& row : m.wins) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row) r.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        wins.push_back(r);
    }
    return {{"systems", m.systems},
            {"wins", wins},
            {"n", m.n},
            {"significant", m.significant},
            {"excluded_annotators", m.excluded_annotators}};
}

double binomial_p(std::uint64_t k, std::uint64_t n) {
    if (n == 0 || k > n) throw InvalidCounts("binomial test needs 0 <= k <= n and n >= 1");
    const std::uint64_t m = std::max(k, n - k);
    if (n <= 60) {
        // Exact: every partial sum fits in 64 bits and 2^-n scaling is exact.
        std::uint64_t c = 1, tail = 0;
        for (std::uint64_t i = 0; i <= n; ++i) {
            if (i >= m) tail += c;
            if (i < n) c = c / (i + 1) * (n - i) + c % (i + 1) * (n - i) / (i + 1);
        }
        return std::min(1.0, 2.0 * std::ldexp(static_cast<double>(tail), -static_cast<int>(n)));
    }
    // Probabilities relative to the mode, so nothing over- or underflows
    // in a harmful way; terms far in the tails vanish harmlessly.
    const std::uint64_t mode = n / 2;
    long double total = 1.0L, tail = mode >= m ? 1.0L : 0.0L;
    long double term = 1.0L;
    for (std::uint64_t i = mode; i < n; ++i) {
        term *= static_cast<long double>(n - i) / static_cast<long double>(i + 1);
        total += term;
        if (i + 1 >= m) tail += term;
    }
    term = 1.0L;
    for (std::uint64_t i = mode; i > 0; --i) {
        term *= static_cast<long double>(i) / static_cast<long double>(n - i + 1);
        total += term;
        if (i - 1 >= m) tail += term;
    }
    return static_cast<double>(std::min(1.0L, 2.0L * tail / total));
}

}  // namespace todsim
