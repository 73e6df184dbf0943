#include "todsim/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "todsim/data_io.hpp"
#include "todsim/error.hpp"
#include "todsim/hash.hpp"

namespace todsim {

namespace {

std::vector<Episode> concat(std::initializer_list<const std::vector<Episode>*> parts) {
    std::vector<Episode> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.byte, path.string() + ": " + e.what());
    }
}

std::filesystem::path iter_dir(const std::filesystem::path& workdir, int k) {
    return workdir / ("iter_" + std::to_string(k));
}

void retrain(BootstrapState& state, const BootstrapConfig& cfg, Trainer& trainer) {
    TrainRequest req;
    req.train = concat({&cfg.in_domain_train, &state.human_train, &state.synthetic_train});
    req.valid = concat({&cfg.in_domain_valid, &state.human_valid, &state.synthetic_valid});
    req.workdir = cfg.workdir.empty() ? std::filesystem::temp_directory_path() / "todsim_trainer" : cfg.workdir;
    req.schema_aware = true;
    req.init = state.schema_aware;
    state.schema_aware = trainer.train(req);
    req.schema_aware = false;
    req.init = state.schema_agnostic;
    state.schema_agnostic = trainer.train(req);
}

}  // namespace

AgentFactory exemplar_agents(const ModelHandle& handle, Role role) {
    if (!handle.store) throw AgentUnavailable("model handle has no exemplar store");
    return exemplar_factory(handle.store, role);
}

BootstrapConfig::BootstrapConfig() {
    generation.schema_aware = true;
    generation.rollouts_per_goal = 20;
    generation.decode = {DecodeMode::Nucleus, kDefaultNucleusP, 0};
    evaluation.schema_aware = false;
    evaluation.rollouts_per_goal = 1;
    evaluation.decode = {DecodeMode::Greedy, 1.0, 0};
}

nlohmann::json to_json(const IterationReport& r) {
    return {
        {"iteration", r.iteration},
        {"ood", to_json(r.ood)},
        {"in_domain", r.in_domain ? to_json(*r.in_domain) : nlohmann::json(nullptr)},
        {"generation_tsr", r.generation_tsr},
        {"generated", r.generated},
        {"successes", r.successes},
        {"train_added", r.train_added},
        {"valid_added", r.valid_added},
        {"valid_tem", r.valid_tem ? nlohmann::json(*r.valid_tem) : nlohmann::json(nullptr)},
    };
}

IterationReport iteration_report_from_json(const nlohmann::json& j) {
    IterationReport r;
    try {
        r.iteration = j.at("iteration").get<int>();
        r.ood = metric_report_from_json(j.at("ood"));
        if (!j.at("in_domain").is_null()) r.in_domain = metric_report_from_json(j.at("in_domain"));
        r.generation_tsr = j.at("generation_tsr").get<std::map<std::string, double>>();
        r.generated = j.at("generated").get<std::size_t>();
        r.successes = j.at("successes").get<std::size_t>();
        r.train_added = j.at("train_added").get<std::size_t>();
        r.valid_added = j.at("valid_added").get<std::size_t>();
        if (!j.at("valid_tem").is_null()) r.valid_tem = j.at("valid_tem").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed iteration report: ") + e.what());
    }
    return r;
}

std::set<std::string> validation_goals(std::span<const ApiCall> goals, double fraction) {
    std::set<std::string> distinct;
    for (const auto& g : goals) distinct.insert(serialize_call(g));
    std::vector<std::pair<std::uint64_t, std::string>> hashed;
    for (const auto& g : distinct) hashed.emplace_back(fnv1a64(g), g);
    std::sort(hashed.begin(), hashed.end());
    const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(hashed.size()) * fraction + 0.5));
    std::set<std::string> out;
    for (std::size_t i = 0; i < count && i < hashed.size(); ++i) out.insert(hashed[i].second);
    return out;
}

IterationReport evaluate(const BootstrapState& state, const BootstrapConfig& cfg) {
    if (!cfg.api) throw std::invalid_argument("bootstrap config has no API table");
    IterationReport r;
    r.iteration = state.iteration;
    const auto user = cfg.agents(state.schema_agnostic, Role::User);
    const auto assistant = cfg.agents(state.schema_agnostic, Role::Assistant);
    BatchOptions opts;
    opts.intent_domains = cfg.intent_domains;
    if (cfg.eval_goals.empty()) throw EmptyInput("bootstrap evaluation needs held-out goals");
    r.ood = online_report(run_batch(cfg.eval_goals, user, assistant, *cfg.api, cfg.evaluation, opts).episodes);
    if (!cfg.eval_gold.empty()) {
        const auto gold_calls = gold_round_calls(cfg.eval_gold);
        add_offline(r.ood, predict_assistant(cfg.eval_gold, assistant, false), gold_calls);
    }
    if (!cfg.in_domain_eval_goals.empty()) {
        r.in_domain =
            online_report(run_batch(cfg.in_domain_eval_goals, user, assistant, *cfg.api, cfg.evaluation, opts).episodes);
    }
    if (!state.synthetic_valid.empty()) {
        const auto p = predict_assistant(state.synthetic_valid, assistant, false);
        if (!p.assistant_hyp.empty()) r.valid_tem = token_exact_match(p.assistant_hyp, p.assistant_ref);
    }
    return r;
}

BootstrapState initial_state(const BootstrapConfig& cfg, Trainer& trainer) {
    BootstrapState state;
    retrain(state, cfg, trainer);
    state.baseline = evaluate(state, cfg);
    return state;
}

BootstrapState bootstrap_iteration(BootstrapState state, const BootstrapConfig& cfg, Trainer& trainer,
                                   const AddsHook& adds) {
    if (!cfg.api) throw std::invalid_argument("bootstrap config has no API table");
    SimConfig gen = cfg.generation;
    gen.schema_aware = true;
    gen.decode.seed = derive_seed(cfg.seed, fnv1a64("generate"), state.iteration + 1);

    AgentFactory user = cfg.agents(state.schema_aware, Role::User);
    if (cfg.generation_user_noise) user = noisy_factory(user, *cfg.generation_user_noise);
    BatchOptions opts;
    opts.intent_domains = cfg.intent_domains;
    const auto batch = run_batch(cfg.goals, user, cfg.agents(state.schema_aware, Role::Assistant), *cfg.api, gen, opts);

    const auto held_out = validation_goals(cfg.goals, cfg.valid_fraction);
    std::size_t train_added = 0, valid_added = 0;
    for (const auto& e : batch.episodes) {
        if (!e.success) continue;
        Episode kept = e;
        kept.origin = Origin::Synthetic;
        if (held_out.contains(serialize_call(*e.goal))) {
            kept.fold = Fold::Valid;
            state.synthetic_valid.push_back(std::move(kept));
            ++valid_added;
        } else {
            kept.fold = Fold::Train;
            state.synthetic_train.push_back(std::move(kept));
            ++train_added;
        }
    }
    ++state.iteration;
    if (train_added + valid_added == 0) {
        state.warnings.push_back("NoSuccesses: iteration " + std::to_string(state.iteration) +
                                 " kept no conversations; training data unchanged");
    }

    std::size_t human_added = 0;
    if (adds) {
        HumanAdds h = adds(state, batch.episodes);
        human_added = h.train.size() + h.valid.size();
        state.human_train.insert(state.human_train.end(), h.train.begin(), h.train.end());
        state.human_valid.insert(state.human_valid.end(), h.valid.begin(), h.valid.end());
    }
    if (train_added + valid_added + human_added > 0) retrain(state, cfg, trainer);

    IterationReport report = evaluate(state, cfg);
    for (const auto& [intent, g] : tsr_by_intent(batch.episodes)) report.generation_tsr[intent] = g.tsr();
    report.generated = batch.episodes.size();
    report.successes = train_added + valid_added;
    report.train_added = train_added;
    report.valid_added = valid_added;
    state.history.push_back(std::move(report));
    return state;
}

void save_snapshot(const BootstrapState& state, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_episodes(dir / "synthetic_train.jsonl", state.synthetic_train);
    write_episodes(dir / "synthetic_valid.jsonl", state.synthetic_valid);
    write_episodes(dir / "human_train.jsonl", state.human_train);
    write_episodes(dir / "human_valid.jsonl", state.human_valid);
    const IterationReport& latest = state.history.empty() ? *state.baseline : state.history.back();
    write_json(dir / "metrics.json", to_json(latest));

    nlohmann::json history = nlohmann::json::array();
    for (const auto& r : state.history) history.push_back(to_json(r));
    const nlohmann::json j = {
        {"iteration", state.iteration},
        {"schema_aware", save_handle(state.schema_aware, dir / "models" / "schema_aware.json", dir)},
        {"schema_agnostic", save_handle(state.schema_agnostic, dir / "models" / "schema_agnostic.json", dir)},
        {"baseline", state.baseline ? to_json(*state.baseline) : nlohmann::json(nullptr)},
        {"history", history},
        {"warnings", state.warnings},
    };
    // Written last: its presence marks the snapshot complete.
    write_json(dir / "state.json", j);
}

BootstrapState load_snapshot(const std::filesystem::path& dir) {
    const auto j = read_json(dir / "state.json");
    BootstrapState state;
    try {
        state.iteration = j.at("iteration").get<int>();
        state.schema_aware = load_handle(j.at("schema_aware"), dir);
        state.schema_agnostic = load_handle(j.at("schema_agnostic"), dir);
        if (!j.at("baseline").is_null()) state.baseline = iteration_report_from_json(j.at("baseline"));
        for (const auto& r : j.at("history")) state.history.push_back(iteration_report_from_json(r));
        state.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, dir.string() + "/state.json: " + e.what());
    }
    state.synthetic_train = load_episodes(dir / "synthetic_train.jsonl");
    state.synthetic_valid = load_episodes(dir / "synthetic_valid.jsonl");
    state.human_train = load_episodes(dir / "human_train.jsonl");
    state.human_valid = load_episodes(dir / "human_valid.jsonl");
    return state;
}

BootstrapState run_bootstrap(int n_iterations, const BootstrapConfig& cfg, Trainer& trainer, const AddsHook& adds) {
    if (n_iterations < 1) throw std::invalid_argument("bootstrap needs at least one iteration");
    std::optional<BootstrapState> state;
    if (!cfg.workdir.empty()) {
        for (int k = n_iterations; k >= 0; --k) {
            if (std::filesystem::exists(iter_dir(cfg.workdir, k) / "state.json")) {
                state = load_snapshot(iter_dir(cfg.workdir, k));
                break;
            }
        }
    }
    if (!state) {
        state = initial_state(cfg, trainer);
        if (!cfg.workdir.empty()) save_snapshot(*state, iter_dir(cfg.workdir, 0));
    }
    while (state->iteration < n_iterations) {
        state = bootstrap_iteration(std::move(*state), cfg, trainer, adds);
        if (!cfg.workdir.empty()) save_snapshot(*state, iter_dir(cfg.workdir, state->iteration));
    }
    return std::move(*state);
}

}  // namespace todsim
