#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/dialogue.hpp"

namespace todsim {

inline constexpr std::string_view kDefaultQuestion = "Which Assistant would you rather use yourself?";
inline constexpr std::string_view kGoldSystem = "gold";
inline constexpr std::string_view kRepetitiveSystem = "repetitive";
inline constexpr std::string_view kRedacted = "[redacted]";

/// Turns shown to annotators: User and AssistantUtt only, without `[DONE]`;
/// any text that still mentions a call or response marker is redacted.
std::vector<Turn> presentable_turns(const std::vector<Turn>& turns);

struct EvalTask {
    std::string id;
    std::string left_system;
    std::string right_system;
    std::vector<Turn> left;   // presentable turns only
    std::vector<Turn> right;  // presentable turns only
    std::string question{kDefaultQuestion};
    bool is_control = false;
    bool goal_matched = true;
    std::string goal_id;  // content hash of the shared goal; never the goal itself

    friend bool operator==(const EvalTask&, const EvalTask&) = default;
};

nlohmann::json to_json(const EvalTask& task);
EvalTask eval_task_from_json(const nlohmann::json& j);

enum class Choice { Left, Right };
std::string_view to_string(Choice c) noexcept;
Choice choice_from_string(std::string_view s);

struct Annotation {
    std::string task_id;
    std::string annotator_id;
    Choice choice = Choice::Left;
    std::optional<std::string> rationale;
    std::string timestamp;
};

nlohmann::json to_json(const Annotation& a);
Annotation annotation_from_json(const nlohmann::json& j);

/// Gold user turns with one assistant utterance repeated in every round.
std::vector<Turn> repetitive_control(const Episode& gold);

struct TaskOptions {
    std::uint64_t seed = 0;
    /// Number of control tasks, built from `control_gold` round-robin.
    std::size_t n_controls = 1;
    std::string question{kDefaultQuestion};
};

/// Every unordered pair of systems crossed with every goal, sides shuffled
/// per task, controls interleaved evenly. Throws MissingEpisode.
std::vector<EvalTask> build_tasks(const std::map<std::string, std::vector<Episode>>& runs,
                                  std::span<const ApiCall> goals, std::span<const Episode> control_gold,
                                  const TaskOptions& options = {});

/// Annotators who picked the repetitive side on more than `max_failures`
/// control tasks.
std::set<std::string> gate_annotators(std::span<const Annotation> annotations, std::span<const EvalTask> tasks,
                                      std::size_t max_failures = 0);

inline constexpr double kSignificance = 0.05;

struct WinMatrix {
    std::vector<std::string> systems;
    /// wins[i][j]: fraction of i-vs-j comparisons won by i; nullopt when n = 0 or i = j.
    std::vector<std::vector<std::optional<double>>> wins;
    std::vector<std::vector<std::size_t>> n;
    std::vector<std::vector<bool>> significant;
    std::set<std::string> excluded_annotators;
};

/// Built from non-control annotations of annotators not in `excluded`.
WinMatrix win_matrix(std::span<const Annotation> annotations, std::span<const EvalTask> tasks,
                     const std::set<std::string>& excluded = {});

nlohmann::json to_json(const WinMatrix& m);

/// Two-sided exact binomial test against p = 0.5:
/// min(1, 2 * sum_{i >= max(k, n-k)} C(n, i) / 2^n). Throws InvalidCounts.
double binomial_p(std::uint64_t k, std::uint64_t n);

}  // namespace todsim
