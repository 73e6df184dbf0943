// Command-line front end: simulation, bootstrapping, active learning,
// pairwise evaluation and reporting.
//
// Exit codes: 0 ok, 2 usage or missing input, 3 bad data, 4 agent failure,
// 5 trainer failure. Errors go to stderr as one JSON object.

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "todsim/active_learning.hpp"
#include "todsim/acute_eval.hpp"
#include "todsim/bootstrap.hpp"
#include "todsim/data_io.hpp"
#include "todsim/error.hpp"
#include "todsim/eval_service.hpp"
#include "todsim/exemplar.hpp"
#include "todsim/fixtures.hpp"
#include "todsim/hash.hpp"
#include "todsim/metrics.hpp"
#include "todsim/mock_api.hpp"
#include "todsim/orchestrator.hpp"
#include "todsim/remote_agent.hpp"
#include "todsim/scripted_agents.hpp"
#include "todsim/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace todsim;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kAgent = 4, kTrainer = 5 };

class UsageError : public Error {
public:
    using Error::Error;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_json_file(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

/// One goal per line: a serialized call or a JSON episode carrying a goal.
std::vector<ApiCall> load_goals(const fs::path& path, std::map<std::string, std::string>* domains = nullptr) {
    std::vector<ApiCall> out;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        try {
            if (t.front() == '{') {
                const Episode e = episode_from_json(json::parse(t));
                if (!e.goal) continue;
                out.push_back(*e.goal);
                if (domains && !e.domain.empty()) (*domains)[e.goal->intent] = e.domain;
            } else {
                out.push_back(parse_call(t));
            }
        } catch (const json::exception& e) {
            throw ParseError(line_no, path.string() + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(line_no, path.string() + ": " + e.reason());
        }
    }
    return out;
}

void save_goals(const fs::path& path, std::span<const ApiCall> goals) {
    std::string text;
    for (const auto& g : goals) text += serialize_call(g) + "\n";
    write_text(path, text);
}

std::vector<ApiSchema> load_schemas(const fs::path& path) {
    std::vector<ApiSchema> out;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(parse_schema(line));
        } catch (const ParseError& e) {
            throw ParseError(line_no, path.string() + ": " + e.reason());
        }
    }
    return out;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw UsageError(std::string(what) + " is required");
    if (!fs::exists(path)) throw IoError(std::string(what) + " not found: " + path);
}

std::map<std::string, std::string> domains_of(std::span<const Episode> episodes) {
    std::map<std::string, std::string> out;
    for (const auto& e : episodes) {
        if (e.goal && !e.domain.empty()) out.emplace(e.goal->intent, e.domain);
    }
    return out;
}

/// Agent specs: scripted[:noise=<eps>] | exemplar:<store.json> | remote:<url>
AgentFactory make_agent(const std::string& spec, Role role, const std::vector<ApiSchema>& known) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
    if (kind == "scripted") {
        AgentFactory base = role == Role::User ? scripted_user_factory() : scripted_assistant_factory({known});
        if (arg.empty()) return base;
        if (!arg.starts_with("noise=")) throw UsageError("scripted agent options: noise=<epsilon>");
        NoiseOptions noise;
        try {
            noise.epsilon = std::stod(arg.substr(6));
        } catch (const std::exception&) {
            throw UsageError("bad noise value in agent spec '" + spec + "'");
        }
        return noisy_factory(base, noise);
    }
    if (kind == "exemplar") {
        require_file(arg, "exemplar store");
        return exemplar_factory(std::make_shared<ExemplarStore>(ExemplarStore::load(arg)), role);
    }
    if (kind == "remote") {
        if (arg.empty()) throw UsageError("remote agent needs a URL");
        return remote_factory(arg);
    }
    throw UsageError("unknown agent spec '" + spec + "'");
}

std::map<std::string, double> parse_intent_noise(const std::string& text) {
    std::map<std::string, double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("noise list items look like Intent=0.5");
        try {
            out[trim(item.substr(0, eq))] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw UsageError("bad noise value in '" + item + "'");
        }
    }
    return out;
}

void write_manifest(const fs::path& out, const std::string& command, const std::vector<std::string>& argv,
                    const std::vector<std::string>& inputs) {
    json hashes = json::object();
    for (const auto& p : inputs) {
        if (!p.empty() && fs::is_regular_file(p)) hashes[p] = hex64(fnv1a64(read_text(p)));
    }
    write_json_file(out / "manifest.json", {{"version", 1}, {"command", command}, {"argv", argv}, {"inputs", hashes}});
}

// ---------------------------------------------------------------- options

struct SimOptions {
    std::string goals, api_table, user = "scripted", assistant = "scripted", out, schemas;
    bool schema_aware = false;
    int rollouts = 20, max_rounds = 10, jobs = 1;
    std::string decode = "nucleus";
    double p = kDefaultNucleusP;
    std::uint64_t seed = 0;
};

struct BootOptions {
    std::string in_domain, goals, eval_goals, in_domain_eval_goals, eval_gold, api_table, out;
    std::string trainer = "exemplar", model_server;
    int iterations = 4, rollouts = 20, max_rounds = 10, jobs = 1, trainer_timeout = 3600;
    double p = kDefaultNucleusP;
    std::uint64_t seed = 0;
    std::string generation_noise;
    // active learning only
    std::string pool_train, pool_valid;
    std::size_t k_schemas = 8, k_convs = 8, fewshot = 0;
};

struct EvalBuildOptions {
    std::vector<std::string> runs;
    std::string goals, control_gold, out, question{kDefaultQuestion};
    std::size_t controls = 1, n_goals = 0;
    std::uint64_t seed = 0;
};

struct EvalServeOptions {
    std::string tasks, annotations, host = "127.0.0.1", static_dir, admin_token;
    int port = 8080;
    std::size_t controls_per_annotator = 1, max_control_failures = 0;
};

struct FixtureOptions {
    std::string out, preset = "standard";
    std::uint64_t seed = 0;
    int train = 8, valid = 2, test = 4;
};

struct TrainOptions {
    std::string train, out;
    std::string role = "both";
    bool schema_aware = false;
};

// ---------------------------------------------------------------- commands

int cmd_simulate(const SimOptions& o, const std::vector<std::string>& argv, bool as_json) {
    require_file(o.goals, "--goals");
    require_file(o.api_table, "--api-table");
    if (o.out.empty()) throw UsageError("--out is required");
    std::map<std::string, std::string> domains;
    const auto goals = load_goals(o.goals, &domains);
    const auto api = load_table_file(o.api_table);
    const auto known = o.schemas.empty() ? schemas_of(goals) : load_schemas(o.schemas);

    SimConfig cfg;
    cfg.schema_aware = o.schema_aware;
    cfg.rollouts_per_goal = o.rollouts;
    cfg.max_rounds = o.max_rounds;
    cfg.jobs = o.jobs;
    cfg.decode = {decode_mode_from_string(o.decode), o.p, o.seed};
    validate(cfg);

    const fs::path out(o.out);
    fs::create_directories(out);
    std::ofstream progress(out / "progress.tsv", std::ios::binary);
    BatchOptions opts;
    opts.intent_domains = domains;
    opts.progress = &progress;
    const auto batch = run_batch(goals, make_agent(o.user, Role::User, known),
                                 make_agent(o.assistant, Role::Assistant, known), api, cfg, opts);
    write_episodes(out / "episodes.jsonl", batch.episodes);

    json metrics = to_json(online_report(batch.episodes));
    metrics["config"] = {{"rollouts_per_goal", cfg.rollouts_per_goal},
                         {"max_rounds", cfg.max_rounds},
                         {"decode", to_string(cfg.decode.mode)},
                         {"p", cfg.decode.p},
                         {"seed", cfg.decode.seed},
                         {"schema_aware", cfg.schema_aware}};
    metrics["errors"] = batch.errors.size();
    write_json_file(out / "metrics.json", metrics);
    if (!batch.errors.empty()) {
        json errs = json::array();
        for (const auto& e : batch.errors) {
            errs.push_back({{"goal_index", e.goal_index}, {"rollout_index", e.rollout_index}, {"message", e.message}});
        }
        write_json_file(out / "errors.json", errs);
    }
    write_manifest(out, "simulate", argv, {o.goals, o.api_table, o.schemas});

    if (as_json) {
        std::cout << metrics.dump() << '\n';
    } else {
        std::cout << "episodes            " << batch.episodes.size() << '\n'
                  << "tsr                 " << metrics["tsr"].get<double>() << '\n'
                  << "calls_per_dialogue  " << metrics["calls_per_dialogue"].get<double>() << '\n'
                  << "errors              " << batch.errors.size() << '\n';
    }
    return batch.errors.empty() ? kOk : kAgent;
}

std::unique_ptr<Trainer> make_trainer(const BootOptions& o) {
    if (o.trainer == "exemplar") return std::make_unique<ExemplarTrainer>();
    if (o.trainer.starts_with("cmd:")) {
        return std::make_unique<ExternalCommandTrainer>(o.trainer.substr(4), std::chrono::seconds(o.trainer_timeout));
    }
    throw UsageError("--trainer is 'exemplar' or 'cmd:<command>'");
}

BootstrapConfig bootstrap_config(const BootOptions& o) {
    require_file(o.in_domain, "--in-domain");
    require_file(o.goals, "--goals");
    require_file(o.eval_goals, "--eval-goals");
    require_file(o.api_table, "--api-table");
    if (o.out.empty()) throw UsageError("--out is required");

    BootstrapConfig cfg;
    const auto in_domain = load_episodes(o.in_domain);
    for (const auto& e : in_domain) {
        if (e.fold == Fold::Train) cfg.in_domain_train.push_back(e);
        if (e.fold == Fold::Valid) cfg.in_domain_valid.push_back(e);
    }
    cfg.intent_domains = domains_of(in_domain);
    cfg.goals = load_goals(o.goals, &cfg.intent_domains);
    cfg.eval_goals = load_goals(o.eval_goals, &cfg.intent_domains);
    if (!o.in_domain_eval_goals.empty()) {
        require_file(o.in_domain_eval_goals, "--in-domain-eval-goals");
        cfg.in_domain_eval_goals = load_goals(o.in_domain_eval_goals, &cfg.intent_domains);
    }
    if (!o.eval_gold.empty()) {
        require_file(o.eval_gold, "--eval-gold");
        cfg.eval_gold = load_episodes(o.eval_gold);
    }
    cfg.api = std::make_shared<ApiTable>(load_table_file(o.api_table));
    cfg.generation.rollouts_per_goal = o.rollouts;
    cfg.generation.max_rounds = o.max_rounds;
    cfg.generation.jobs = o.jobs;
    cfg.generation.decode.p = o.p;
    cfg.evaluation.max_rounds = o.max_rounds;
    cfg.evaluation.jobs = o.jobs;
    validate(cfg.generation);
    cfg.seed = o.seed;
    cfg.workdir = o.out;
    if (!o.generation_noise.empty()) cfg.generation_user_noise = NoiseOptions{0.0, parse_intent_noise(o.generation_noise)};
    if (!o.model_server.empty()) {
        const std::string tmpl = o.model_server;
        cfg.agents = [tmpl](const ModelHandle& h, Role role) {
            if (h.store) return exemplar_factory(h.store, role);
            std::string url = tmpl;
            if (const auto pos = url.find("{checkpoint}"); pos != std::string::npos) {
                url.replace(pos, 12, h.checkpoint);
            }
            return remote_factory(url);
        };
    } else if (o.trainer != "exemplar") {
        throw UsageError("an external trainer needs --model-server to serve its checkpoints");
    }
    return cfg;
}

json bootstrap_summary(const BootstrapState& s) {
    json history = json::array();
    for (const auto& r : s.history) history.push_back(to_json(r));
    return {{"iterations", s.iteration},
            {"baseline", s.baseline ? to_json(*s.baseline) : json(nullptr)},
            {"history", history},
            {"synthetic_train", s.synthetic_train.size()},
            {"synthetic_valid", s.synthetic_valid.size()},
            {"human_train", s.human_train.size()},
            {"human_valid", s.human_valid.size()},
            {"warnings", s.warnings}};
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

void print_progress(const BootstrapState& s) {
    std::cout << "iter  ood_tsr  ind_tsr  successes\n";
    const auto row = [](const IterationReport& r) {
        std::cout << r.iteration << "     " << fixed3(r.ood.tsr) << "    "
                  << (r.in_domain ? fixed3(r.in_domain->tsr) : std::string("-    ")) << "    " << r.successes << '\n';
    };
    if (s.baseline) row(*s.baseline);
    for (const auto& r : s.history) row(r);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_bootstrap(const BootOptions& o, const std::vector<std::string>& argv, bool as_json) {
    if (o.iterations < 1) throw UsageError("--iterations must be at least 1");
    const auto cfg = bootstrap_config(o);
    const auto trainer = make_trainer(o);
    const auto state = run_bootstrap(o.iterations, cfg, *trainer);
    const json summary = bootstrap_summary(state);
    write_json_file(fs::path(o.out) / "metrics.json", summary);
    write_manifest(o.out, "bootstrap", argv,
                   {o.in_domain, o.goals, o.eval_goals, o.in_domain_eval_goals, o.eval_gold, o.api_table});
    if (as_json) {
        std::cout << summary.dump() << '\n';
    } else {
        print_progress(state);
    }
    return kOk;
}

int cmd_al(const BootOptions& o, const std::vector<std::string>& argv, bool as_json) {
    if (o.iterations < 1) throw UsageError("--iterations must be at least 1");
    require_file(o.pool_train, "--pool-train");
    require_file(o.pool_valid, "--pool-valid");
    auto cfg = bootstrap_config(o);
    const auto pool_train = load_episodes(o.pool_train);
    const auto pool_valid = load_episodes(o.pool_valid);
    for (const auto& [intent, domain] : domains_of(pool_train)) cfg.intent_domains.emplace(intent, domain);
    const auto trainer = make_trainer(o);

    std::vector<AlLedgerEntry> ledger;
    const auto hook = active_learning_hook(pool_train, pool_valid, {o.k_schemas, o.k_convs, o.seed}, &ledger);
    const auto state = run_bootstrap(o.iterations, cfg, *trainer, hook);
    write_al_ledger(fs::path(o.out) / "al_ledger.json", ledger);

    json summary = bootstrap_summary(state);
    if (o.fewshot > 0) {
        BootstrapConfig few = cfg;
        few.workdir.clear();
        const auto picked = select_random_fewshot(pool_train, o.fewshot, o.seed);
        few.in_domain_train.insert(few.in_domain_train.end(), picked.begin(), picked.end());
        const auto baseline = initial_state(few, *trainer);
        summary["random_fewshot"] = {{"n", picked.size()}, {"report", to_json(*baseline.baseline)}};
    }
    write_json_file(fs::path(o.out) / "metrics.json", summary);
    write_manifest(o.out, "al", argv,
                   {o.in_domain, o.goals, o.eval_goals, o.in_domain_eval_goals, o.api_table, o.pool_train, o.pool_valid});
    if (as_json) {
        std::cout << summary.dump() << '\n';
    } else {
        print_progress(state);
        if (summary.contains("random_fewshot")) {
            std::cout << "random few-shot n=" << summary["random_fewshot"]["n"] << " ood_tsr "
                      << summary["random_fewshot"]["report"]["ood"]["tsr"] << '\n';
        }
    }
    return kOk;
}

int cmd_train(const TrainOptions& o, const std::vector<std::string>& argv) {
    require_file(o.train, "--train");
    if (o.out.empty()) throw UsageError("--out is required");
    TrainRole role = TrainRole::Both;
    if (o.role == "user") {
        role = TrainRole::User;
    } else if (o.role == "assistant") {
        role = TrainRole::Assistant;
    } else if (o.role != "both") {
        throw UsageError("--role is user, assistant or both");
    }
    const auto episodes = load_episodes(o.train);
    const auto store = train_exemplar(ExemplarStore{}, episodes, role, o.schema_aware);
    store.save(o.out);
    (void)argv;
    std::cout << "exemplars " << store.size() << '\n';
    return kOk;
}

int cmd_report(const std::string& dir, bool as_json) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::pair<int, IterationReport>> rows;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (!entry.is_directory() || !name.starts_with("iter_")) continue;
        const auto metrics = entry.path() / "metrics.json";
        if (!fs::exists(metrics)) continue;
        int k = 0;
        try {
            k = std::stoi(name.substr(5));
        } catch (const std::exception&) {
            continue;
        }
        rows.emplace_back(k, iteration_report_from_json(json::parse(read_text(metrics))));
    }
    if (rows.empty()) throw EmptyInput("no iter_<k>/metrics.json under " + dir);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    const IterationReport& base = rows.front().second;
    const auto reduction = [](std::optional<double> b, std::optional<double> n) -> std::optional<double> {
        if (!b || !n || *b == 1.0) return std::nullopt;
        return error_reduction(*b, *n);
    };
    json table = json::array();
    for (const auto& [k, r] : rows) {
        const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        table.push_back({{"iteration", k},
                         {"ood_tsr", r.ood.tsr},
                         {"ood_jga", opt(r.ood.jga)},
                         {"ood_bleu4", opt(r.ood.bleu4)},
                         {"in_domain_tsr", r.in_domain ? json(r.in_domain->tsr) : json(nullptr)},
                         {"successes", r.successes},
                         {"tsr_error_reduction", opt(reduction(base.ood.tsr, r.ood.tsr))},
                         {"jga_error_reduction", opt(reduction(base.ood.jga, r.ood.jga))}});
    }
    if (as_json) {
        std::cout << table.dump(2) << '\n';
        return kOk;
    }
    const auto cell = [](const json& v) { return v.is_null() ? std::string("-    ") : fixed3(v.get<double>()); };
    std::cout << "iter  ood_tsr  ood_jga  bleu4  ind_tsr  tsr_err_red  jga_err_red\n";
    for (const auto& row : table) {
        std::cout << row["iteration"].get<int>() << "     " << cell(row["ood_tsr"]) << "    " << cell(row["ood_jga"])
                  << "    " << cell(row["ood_bleu4"]) << "  " << cell(row["in_domain_tsr"]) << "    "
                  << cell(row["tsr_error_reduction"]) << "        " << cell(row["jga_error_reduction"]) << '\n';
    }
    return kOk;
}

int cmd_fixture(const FixtureOptions& o, const std::vector<std::string>& argv) {
    if (o.out.empty()) throw UsageError("--out is required");
    WorldConfig wc;
    wc.seed = o.seed;
    wc.train_per_intent = o.train;
    wc.valid_per_intent = o.valid;
    wc.test_per_intent = o.test;
    std::set<std::string> holdout = kDefaultHoldoutDomains;
    if (o.preset == "al") {
        wc.domains = standard_domains();
        wc.domains.resize(8);
        holdout.clear();
        for (const auto& d : extra_domains()) {
            wc.domains.push_back(d);
            holdout.insert(d.name);
        }
    } else if (o.preset != "standard") {
        throw UsageError("--preset is 'standard' or 'al'");
    }
    const World world = make_world(wc);
    const auto split = split_by_domain(world.human, holdout);
    const fs::path out(o.out);
    fs::create_directories(out);
    write_episodes(out / "human.jsonl", world.human);
    write_episodes(out / "in_domain.jsonl", split.in_domain.all());
    write_episodes(out / "ood_train.jsonl", split.out_of_domain.train);
    write_episodes(out / "ood_valid.jsonl", split.out_of_domain.valid);
    write_episodes(out / "ood_test.jsonl", split.out_of_domain.test);
    save_table(world.api, out / "api_table.jsonl");
    std::string schemas;
    for (const auto& s : world.schemas) schemas += serialize_schema(s) + "\n";
    write_text(out / "schemas.txt", schemas);
    save_goals(out / "goals_ood_train.txt", extract_goals(split.out_of_domain.train).goals);
    save_goals(out / "goals_ood_test.txt", extract_goals(split.out_of_domain.test).goals);
    save_goals(out / "goals_in_domain_test.txt", extract_goals(split.in_domain.test).goals);
    write_manifest(out, "fixture", argv, {});
    std::cout << "episodes " << world.human.size() << " (in-domain " << split.in_domain.size() << ", out-of-domain "
              << split.out_of_domain.size() << ")\n";
    return kOk;
}

int cmd_eval_build(const EvalBuildOptions& o, const std::vector<std::string>& argv) {
    if (o.runs.size() < 2) throw UsageError("--run name=path is needed at least twice");
    if (o.out.empty()) throw UsageError("--out is required");
    std::map<std::string, std::vector<Episode>> runs;
    std::vector<std::string> inputs;
    for (const auto& r : o.runs) {
        const auto eq = r.find('=');
        if (eq == std::string::npos) throw UsageError("--run takes name=path");
        const std::string path = r.substr(eq + 1);
        require_file(path, "--run episodes");
        runs[r.substr(0, eq)] = load_episodes(path);
        inputs.push_back(path);
    }
    std::vector<ApiCall> goals;
    if (!o.goals.empty()) {
        require_file(o.goals, "--goals");
        goals = load_goals(o.goals);
        inputs.push_back(o.goals);
    } else {
        // Goals every run covers, in the first run's order.
        for (const auto& e : runs.begin()->second) {
            if (!e.goal) continue;
            const bool everywhere = std::all_of(runs.begin(), runs.end(), [&](const auto& kv) {
                return std::any_of(kv.second.begin(), kv.second.end(),
                                   [&](const Episode& x) { return x.goal && calls_equal(*x.goal, *e.goal); });
            });
            const bool seen = std::any_of(goals.begin(), goals.end(), [&](const ApiCall& g) { return calls_equal(g, *e.goal); });
            if (everywhere && !seen) goals.push_back(*e.goal);
        }
    }
    if (o.n_goals > 0 && goals.size() > o.n_goals) {
        Rng rng(o.seed);
        rng.shuffle(goals);
        goals.resize(o.n_goals);
    }
    std::vector<Episode> gold;
    if (!o.control_gold.empty()) {
        require_file(o.control_gold, "--control-gold");
        gold = load_episodes(o.control_gold);
        inputs.push_back(o.control_gold);
    }
    const auto tasks = build_tasks(runs, goals, gold, {o.seed, gold.empty() ? 0 : o.controls, o.question});
    write_tasks(o.out, tasks);
    write_manifest(fs::path(o.out).parent_path().empty() ? fs::path(".") : fs::path(o.out).parent_path(), "eval-build",
                   argv, inputs);
    std::cout << "tasks " << tasks.size() << '\n';
    return kOk;
}

EvalService* g_service = nullptr;

int cmd_eval_serve(const EvalServeOptions& o) {
    require_file(o.tasks, "--tasks");
    if (o.annotations.empty()) throw UsageError("--annotations is required");
    EvalServiceOptions so;
    so.tasks_file = o.tasks;
    so.annotation_log = o.annotations;
    so.controls_per_annotator = o.controls_per_annotator;
    so.max_control_failures = o.max_control_failures;
    so.admin_token = o.admin_token;
    so.static_dir = o.static_dir;
    EvalService service(so);
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
    });
    std::cerr << "serving on " << o.host << ':' << o.port << '\n';
    service.listen(o.host, o.port);
    g_service = nullptr;
    return kOk;
}

int cmd_play(const std::string& assistant_spec, const std::string& schemas, bool schema_aware) {
    const auto known = schemas.empty() ? std::vector<ApiSchema>{} : load_schemas(schemas);
    auto assistant = make_agent(assistant_spec, Role::Assistant, known)();
    std::vector<Turn> history;
    bool first = true;
    std::string line;
    std::cout << "User> " << std::flush;
    while (std::getline(std::cin, line)) {
        history.push_back({Speaker::User, line});
        if (line == kDoneToken) break;
        Observation obs{Role::Assistant, std::nullopt, history, {DecodeMode::Greedy, 1.0, 0}};
        if (first && schema_aware && !known.empty()) obs.grounding = serialize_schema(known.front());
        first = false;
        std::string reply = assistant->act(obs);
        if (looks_like_call(reply)) {
            std::cout << "  [" << reply << "]\n";
            history.push_back({Speaker::AssistantCall, reply});
            history.push_back({Speaker::ApiResp, serialize_response(ApiResponse::failure())});
            obs.history = history;
            obs.grounding.reset();
            reply = assistant->act(obs);
            if (looks_like_call(reply)) reply.clear();
        }
        history.push_back({Speaker::AssistantUtt, reply});
        std::cout << "Assistant> " << reply << "\nUser> " << std::flush;
    }
    return kOk;
}

int run(std::vector<std::string> args);

int cmd_replay(const std::string& manifest, const std::string& out) {
    require_file(manifest, "manifest");
    const json m = json::parse(read_text(manifest));
    auto argv = m.at("argv").get<std::vector<std::string>>();
    if (!out.empty()) {
        bool replaced = false;
        for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
            if (argv[i] == "--out") {
                argv[i + 1] = out;
                replaced = true;
            }
        }
        if (!replaced) throw UsageError("manifest command has no --out to redirect");
    }
    return run(argv);
}

int classify(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const IoError*>(&e)) return kUsage;
    if (dynamic_cast<const AgentUnavailable*>(&e) || dynamic_cast<const MalformedGrounding*>(&e)) return kAgent;
    if (dynamic_cast<const TrainerFailed*>(&e)) return kTrainer;
    if (dynamic_cast<const Error*>(&e)) return kData;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return kUsage;
    return kData;
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return "UsageError";
    if (dynamic_cast<const IoError*>(&e)) return "IoError";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const SchemaMismatch*>(&e)) return "SchemaMismatch";
    if (dynamic_cast<const UnknownIntent*>(&e)) return "UnknownIntent";
    if (dynamic_cast<const EmptyInput*>(&e)) return "EmptyInput";
    if (dynamic_cast<const AgentUnavailable*>(&e)) return "AgentUnavailable";
    if (dynamic_cast<const MalformedGrounding*>(&e)) return "MalformedGrounding";
    if (dynamic_cast<const TrainerFailed*>(&e)) return "TrainerFailed";
    if (dynamic_cast<const MissingEpisode*>(&e)) return "MissingEpisode";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "InvalidArgument";
    return "Error";
}

void add_boot_options(CLI::App* c, BootOptions& o) {
    c->add_option("--in-domain", o.in_domain, "In-domain human episodes (JSONL, train and valid folds used)");
    c->add_option("--goals", o.goals, "Generation goals");
    c->add_option("--eval-goals", o.eval_goals, "Held-out goals for evaluation");
    c->add_option("--in-domain-eval-goals", o.in_domain_eval_goals, "In-domain goals for evaluation");
    c->add_option("--eval-gold", o.eval_gold, "Gold episodes for offline JGA and BLEU-4");
    c->add_option("--api-table", o.api_table, "Mock API table (JSONL)");
    c->add_option("--out", o.out, "Output directory (snapshots, metrics, manifest)");
    c->add_option("--iterations", o.iterations, "Bootstrap iterations")->capture_default_str();
    c->add_option("--rollouts", o.rollouts, "Rollouts per goal")->capture_default_str();
    c->add_option("--max-rounds", o.max_rounds, "Round limit per dialogue")->capture_default_str();
    c->add_option("--p", o.p, "Nucleus mass for generation")->capture_default_str();
    c->add_option("--seed", o.seed, "Seed")->capture_default_str();
    c->add_option("--jobs", o.jobs, "Concurrent rollouts")->capture_default_str();
    c->add_option("--trainer", o.trainer, "exemplar | cmd:<command>")->capture_default_str();
    c->add_option("--trainer-timeout", o.trainer_timeout, "Seconds")->capture_default_str();
    c->add_option("--model-server", o.model_server, "Agent URL template with {checkpoint} for external models");
    c->add_option("--generation-noise", o.generation_noise, "Intent=eps,... noise on the generating User");
}

int run(std::vector<std::string> args) {
    CLI::App app{"Task-oriented dialogue simulation toolkit"};
    app.set_config("--config", "", "TOML-style key/value file; flags override it");
    app.require_subcommand(1);
    app.fallthrough();
    bool as_json = false;
    app.add_flag("--json", as_json, "Machine-readable output");

    SimOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Run a batch of simulated dialogues");
    simulate->add_option("--goals", sim.goals, "Goals: serialized calls or JSON episodes, one per line");
    simulate->add_option("--api-table", sim.api_table, "Mock API table (JSONL)");
    simulate->add_option("--user-agent", sim.user, "scripted[:noise=e] | exemplar:<store> | remote:<url>")->capture_default_str();
    simulate->add_option("--assistant-agent", sim.assistant, "scripted[:noise=e] | exemplar:<store> | remote:<url>")->capture_default_str();
    simulate->add_option("--schemas", sim.schemas, "Schemas known to a scripted assistant (one per line)");
    simulate->add_flag("--schema-aware", sim.schema_aware, "Show the schema to the assistant");
    simulate->add_option("--rollouts", sim.rollouts, "Rollouts per goal")->capture_default_str();
    simulate->add_option("--max-rounds", sim.max_rounds, "Round limit")->capture_default_str();
    simulate->add_option("--decode", sim.decode, "greedy | nucleus")->capture_default_str();
    simulate->add_option("--p", sim.p, "Nucleus mass")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "Seed")->capture_default_str();
    simulate->add_option("--jobs", sim.jobs, "Concurrent rollouts")->capture_default_str();
    simulate->add_option("--out", sim.out, "Output directory");

    BootOptions boot;
    auto* bootstrap = app.add_subcommand("bootstrap", "Iterate generation, success filtering and retraining");
    add_boot_options(bootstrap, boot);

    BootOptions al;
    auto* al_cmd = app.add_subcommand("al", "Bootstrapping with active-learning injections");
    add_boot_options(al_cmd, al);
    al_cmd->add_option("--pool-train", al.pool_train, "Out-of-domain human train pool");
    al_cmd->add_option("--pool-valid", al.pool_valid, "Out-of-domain human valid pool");
    al_cmd->add_option("--k-schemas", al.k_schemas, "Worst intents per iteration")->capture_default_str();
    al_cmd->add_option("--k-convs", al.k_convs, "Conversations per iteration and fold")->capture_default_str();
    al_cmd->add_option("--fewshot-baseline", al.fewshot, "Also train a random few-shot model with this many conversations");

    TrainOptions tr;
    auto* train = app.add_subcommand("train", "Train an exemplar store");
    train->add_option("--train", tr.train, "Episodes (JSONL)");
    train->add_option("--out", tr.out, "Store path");
    train->add_option("--role", tr.role, "user | assistant | both")->capture_default_str();
    train->add_flag("--schema-aware", tr.schema_aware, "Key assistant contexts as schema-aware");

    EvalBuildOptions eb;
    auto* eval_build = app.add_subcommand("eval-build", "Build pairwise evaluation tasks");
    eval_build->add_option("--run", eb.runs, "system=episodes.jsonl (repeatable)");
    eval_build->add_option("--goals", eb.goals, "Goals to compare on (default: goals every run covers)");
    eval_build->add_option("--n-goals", eb.n_goals, "Random subset size");
    eval_build->add_option("--control-gold", eb.control_gold, "Gold episodes for control pairs");
    eval_build->add_option("--controls", eb.controls, "Number of control tasks")->capture_default_str();
    eval_build->add_option("--question", eb.question, "Question shown to annotators");
    eval_build->add_option("--seed", eb.seed, "Seed")->capture_default_str();
    eval_build->add_option("--out", eb.out, "Tasks file (JSONL)");

    EvalServeOptions es;
    auto* eval_serve = app.add_subcommand("eval-serve", "Serve evaluation tasks over HTTP");
    eval_serve->add_option("--tasks", es.tasks, "Tasks file");
    eval_serve->add_option("--annotations", es.annotations, "Append-only annotation log");
    eval_serve->add_option("--host", es.host, "Bind address")->capture_default_str();
    eval_serve->add_option("--port", es.port, "Port")->capture_default_str();
    eval_serve->add_option("--static", es.static_dir, "UI bundle directory");
    eval_serve->add_option("--controls-per-annotator", es.controls_per_annotator, "Controls served first")->capture_default_str();
    eval_serve->add_option("--max-control-failures", es.max_control_failures, "Failures tolerated before exclusion")->capture_default_str();
    eval_serve->add_option("--admin-token", es.admin_token, "Bearer token for /api/results (unset disables it)")->envname("TODSIM_ADMIN_TOKEN");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Tabulate per-iteration metrics");
    report->add_option("dir", report_dir, "Bootstrap or active-learning output directory")->required();

    FixtureOptions fx;
    auto* fixture = app.add_subcommand("fixture", "Write a synthetic task world");
    fixture->add_option("--out", fx.out, "Output directory");
    fixture->add_option("--preset", fx.preset, "standard | al")->capture_default_str();
    fixture->add_option("--seed", fx.seed, "Seed")->capture_default_str();
    fixture->add_option("--train", fx.train, "Train conversations per intent")->capture_default_str();
    fixture->add_option("--valid", fx.valid, "Valid conversations per intent")->capture_default_str();
    fixture->add_option("--test", fx.test, "Test conversations per intent")->capture_default_str();

    std::string replay_manifest, replay_out;
    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay->add_option("manifest", replay_manifest, "manifest.json")->required();
    replay->add_option("--out", replay_out, "Redirect output");

    std::string play_agent = "scripted", play_schemas;
    bool play_aware = false;
    auto* play = app.add_subcommand("play", "Talk to an assistant on stdin (debugging aid)");
    play->add_option("--assistant-agent", play_agent, "Assistant spec")->capture_default_str();
    play->add_option("--schemas", play_schemas, "Schemas; the first is shown when --schema-aware");
    play->add_flag("--schema-aware", play_aware, "Show the first schema");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
        return kUsage;
    }

    if (simulate->parsed()) return cmd_simulate(sim, args, as_json);
    if (bootstrap->parsed()) return cmd_bootstrap(boot, args, as_json);
    if (al_cmd->parsed()) return cmd_al(al, args, as_json);
    if (train->parsed()) return cmd_train(tr, args);
    if (eval_build->parsed()) return cmd_eval_build(eb, args);
    if (eval_serve->parsed()) return cmd_eval_serve(es);
    if (report->parsed()) return cmd_report(report_dir, as_json);
    if (fixture->parsed()) return cmd_fixture(fx, args);
    if (replay->parsed()) return cmd_replay(replay_manifest, replay_out);
    if (play->parsed()) return cmd_play(play_agent, play_schemas, play_aware);
    return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args);
    } catch (const std::exception& e) {
        const int code = classify(e);
        std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}, {"exit_code", code}}.dump() << '\n';
        return code;
    }
}
