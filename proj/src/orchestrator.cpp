#include "todsim/orchestrator.hpp"

#include <atomic>
#include <stdexcept>
#include <thread>

#include "todsim/error.hpp"
#include "todsim/hash.hpp"

namespace todsim {

void validate(const SimConfig& cfg) {
    if (cfg.max_rounds < 1) throw std::invalid_argument("max_rounds must be at least 1");
    if (cfg.rollouts_per_goal < 1) throw std::invalid_argument("rollouts_per_goal must be at least 1");
    if (cfg.jobs < 1) throw std::invalid_argument("jobs must be at least 1");
    if (!(cfg.decode.p > 0.0 && cfg.decode.p <= 1.0)) throw std::invalid_argument("p must lie in (0, 1]");
}

Rollout run_dialogue(Agent& user, Agent& assistant, const ApiTable& api, const ApiCall& goal,
                     const std::optional<ApiSchema>& schema, const SimConfig& cfg, std::uint64_t seed,
                     const ObservationHook& hook) {
    if (schema.has_value() != cfg.schema_aware) {
        throw std::invalid_argument("schema must be given exactly when the assistant is schema-aware");
    }
    Rollout out;
    Episode& ep = out.episode;
    ep.goal = goal;
    ep.schema = schema;
    ep.origin = Origin::Synthetic;

    DecodeConfig decode = cfg.decode;
    decode.seed = seed;
    bool user_grounded = false;
    bool assistant_grounded = false;

    const auto observe_user = [&] {
        Observation obs{Role::User, std::nullopt, ep.turns, decode};
        if (!user_grounded) obs.grounding = serialize_call(goal);
        user_grounded = true;
        return user.act(obs);
    };
    const auto observe_assistant = [&] {
        Observation obs{Role::Assistant, std::nullopt, ep.turns, decode};
        if (!assistant_grounded && schema) obs.grounding = serialize_schema(*schema);
        assistant_grounded = true;
        if (hook) hook(obs);
        return assistant.act(obs);
    };

    for (int round = 0; round < cfg.max_rounds; ++round) {
        const std::size_t round_start = ep.turns.size();
        try {
            std::string said = observe_user();
            ep.turns.push_back({Speaker::User, said});
            if (said == kDoneToken) break;

            std::string reply = observe_assistant();
            if (looks_like_call(reply)) {
                ApiResponse resp = ApiResponse::failure();
                try {
                    resp = api.invoke(parse_call(reply));
                } catch (const ParseError&) {
                }
                ep.turns.push_back({Speaker::AssistantCall, reply});
                ep.turns.push_back({Speaker::ApiResp, serialize_response(resp)});
                reply = observe_assistant();
                // One call per round: a second call in the same round is dropped.
                if (looks_like_call(reply)) reply.clear();
            }
            ep.turns.push_back({Speaker::AssistantUtt, reply});
        } catch (const AgentUnavailable& e) {
            ep.turns.resize(round_start);
            out.error = e.what();
            break;
        }
    }
    ep.success = !out.error && recompute_success(ep);
    return out;
}

std::uint64_t rollout_seed(std::uint64_t seed, std::size_t goal_index, int rollout_index) {
    return derive_seed(seed, goal_index, rollout_index);
}

BatchResult run_batch(std::span<const ApiCall> goals, const AgentFactory& user, const AgentFactory& assistant,
                      const ApiTable& api, const SimConfig& cfg, const BatchOptions& options) {
    validate(cfg);
    const std::size_t per_goal = static_cast<std::size_t>(cfg.rollouts_per_goal);
    const std::size_t total = goals.size() * per_goal;
    std::vector<Rollout> rollouts(total);
    std::vector<std::string> failures(total);

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < total;) {
            const std::size_t g = i / per_goal;
            const int r = static_cast<int>(i % per_goal);
            const ApiCall& goal = goals[g];
            try {
                auto u = user();
                auto a = assistant();
                std::optional<ApiSchema> schema;
                if (cfg.schema_aware) schema = schema_of(goal);
                rollouts[i] = run_dialogue(*u, *a, api, goal, schema, cfg, rollout_seed(cfg.decode.seed, g, r),
                                           options.assistant_hook);
            } catch (const std::exception& e) {
                // Agent construction or grounding errors fail this rollout only.
                rollouts[i].episode.goal = goal;
                if (cfg.schema_aware) rollouts[i].episode.schema = schema_of(goal);
                rollouts[i].error = e.what();
            }
        }
    };
    const int threads = std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(total, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    BatchResult result;
    result.episodes.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        Episode& ep = rollouts[i].episode;
        ep.origin = Origin::Synthetic;
        if (const auto it = options.intent_domains.find(ep.goal->intent); it != options.intent_domains.end()) {
            ep.domain = it->second;
        }
        if (rollouts[i].error) {
            result.errors.push_back({i / per_goal, static_cast<int>(i % per_goal), *rollouts[i].error});
        }
        if (options.progress) {
            *options.progress << i / per_goal << '\t' << i % per_goal << '\t' << (ep.success ? "true" : "false")
                              << '\t' << ep.turns.size() << '\n';
        }
        result.episodes.push_back(std::move(ep));
    }
    return result;
}

}  // namespace todsim
