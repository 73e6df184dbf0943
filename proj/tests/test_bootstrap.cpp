#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "todsim/active_learning.hpp"
#include "todsim/bootstrap.hpp"
#include "todsim/data_io.hpp"
#include "todsim/error.hpp"
#include "todsim/fixtures.hpp"
#include "todsim/hash.hpp"
#include "todsim/trainer.hpp"

using namespace todsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("todsim_boot_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

AgentFactory oracle_agents(const ModelHandle&, Role role) {
    return role == Role::User ? scripted_user_factory() : scripted_assistant_factory();
}

struct Setup {
    World world = make_world({});
    BootstrapConfig cfg;

    explicit Setup(std::size_t n_goals) {
        const auto split = split_by_domain(world.human);
        cfg.api = std::make_shared<ApiTable>(world.api);
        cfg.in_domain_train = split.in_domain.train;
        cfg.in_domain_valid = split.in_domain.valid;
        cfg.intent_domains = world.intent_domains;
        auto goals = extract_goals(split.out_of_domain.train).goals;
        goals.resize(n_goals);
        cfg.goals = goals;
        cfg.eval_goals = extract_goals(split.out_of_domain.test).goals;
        cfg.seed = 3;
    }
};

std::set<std::string> ids(const std::vector<Episode>& eps) {
    std::set<std::string> out;
    for (const auto& e : eps) out.insert(episode_id(e));
    return out;
}

}  // namespace

TEST_CASE("validation goals are a hash-chosen tenth") {
    std::vector<ApiCall> goals;
    for (int i = 0; i < 25; ++i) goals.push_back({"G", {{"x", std::to_string(i)}}});
    goals.push_back(goals.front());
    const auto held = validation_goals(goals, 0.1);
    CHECK(held.size() == 3);  // round(25 * 0.1) over distinct goals
    CHECK(validation_goals(goals, 0.1) == held);
}

TEST_CASE("one oracle iteration: success filter and 90/10 split") {
    Setup s(10);
    s.cfg.agents = oracle_agents;
    ExemplarTrainer trainer;
    const auto state = bootstrap_iteration(initial_state(s.cfg, trainer), s.cfg, trainer);
    const auto& report = state.history.back();
    CHECK(report.generated == 200);
    CHECK(report.successes == 200);
    CHECK(state.synthetic_train.size() == 180);
    CHECK(state.synthetic_valid.size() == 20);
    std::set<std::string> train_goals, valid_goals;
    for (const auto& e : state.synthetic_train) {
        CHECK(e.success);
        CHECK(e.origin == Origin::Synthetic);
        train_goals.insert(serialize_call(*e.goal));
    }
    for (const auto& e : state.synthetic_valid) valid_goals.insert(serialize_call(*e.goal));
    for (const auto& g : valid_goals) CHECK_FALSE(train_goals.contains(g));
}

TEST_CASE("no successes leaves the data unchanged") {
    Setup s(4);
    s.cfg.agents = [](const ModelHandle&, Role role) -> AgentFactory {
        if (role == Role::User) return scripted_user_factory();
        return noisy_factory(scripted_assistant_factory(), {1.0, {}});
    };
    ExemplarTrainer trainer;
    const auto before = initial_state(s.cfg, trainer);
    const auto after = bootstrap_iteration(before, s.cfg, trainer);
    CHECK(after.synthetic_train == before.synthetic_train);
    CHECK(after.synthetic_valid.empty());
    REQUIRE_FALSE(after.warnings.empty());
    CHECK(after.warnings.back().find("NoSuccesses") != std::string::npos);
}

TEST_CASE("accumulation, fold base case and resumption") {
    Setup s(6);
    s.cfg.generation.rollouts_per_goal = 4;
    ExemplarTrainer trainer;

    const auto one = run_bootstrap(1, s.cfg, trainer);
    const auto direct = bootstrap_iteration(initial_state(s.cfg, trainer), s.cfg, trainer);
    CHECK(one.synthetic_train == direct.synthetic_train);
    CHECK(to_json(one.history.back()) == to_json(direct.history.back()));

    const auto two = bootstrap_iteration(one, s.cfg, trainer);
    const auto first = ids(one.synthetic_train);
    const auto second = ids(two.synthetic_train);
    CHECK(std::includes(second.begin(), second.end(), first.begin(), first.end()));

    auto cfg_a = s.cfg;
    cfg_a.workdir = scratch_dir("a");
    const auto full = run_bootstrap(3, cfg_a, trainer);
    auto cfg_b = s.cfg;
    cfg_b.workdir = scratch_dir("b");
    run_bootstrap(1, cfg_b, trainer);
    const auto resumed = run_bootstrap(3, cfg_b, trainer);
    CHECK(resumed.iteration == 3);
    CHECK(resumed.synthetic_train == full.synthetic_train);
    CHECK(resumed.synthetic_valid == full.synthetic_valid);
    REQUIRE(resumed.history.size() == full.history.size());
    for (std::size_t i = 0; i < full.history.size(); ++i) CHECK(to_json(resumed.history[i]) == to_json(full.history[i]));
    CHECK(*resumed.schema_agnostic.store == *full.schema_agnostic.store);

    const auto loaded = load_snapshot(cfg_a.workdir / "iter_3");
    CHECK(loaded.synthetic_train == full.synthetic_train);
    CHECK(*loaded.schema_aware.store == *full.schema_aware.store);
}

TEST_CASE("iteration reports round-trip") {
    IterationReport r;
    r.iteration = 2;
    r.ood.tsr = 0.5;
    r.in_domain = MetricReport{};
    r.generation_tsr["A"] = 0.25;
    r.valid_tem = 0.75;
    CHECK(to_json(iteration_report_from_json(to_json(r))) == to_json(r));
}

TEST_CASE("external command trainer") {
    const auto dir = scratch_dir("ext");
    const auto script = dir / "train.sh";
    std::ofstream(script) << "#!/bin/sh\n"
                             "while [ $# -gt 0 ]; do\n"
                             "  case \"$1\" in --train) train=\"$2\"; shift ;; --schema-aware) aware=\"$2\"; shift ;; esac\n"
                             "  shift\n"
                             "done\n"
                             "test -s \"$train\" || exit 3\n"
                             "echo training >&2\n"
                             "echo \"CHECKPOINT $(dirname \"$train\")/ckpt-$aware\"\n";
    fs::permissions(script, fs::perms::owner_all);

    Setup s(1);
    TrainRequest req{s.cfg.in_domain_train, s.cfg.in_domain_valid, {}, true, dir / "work"};
    ExternalCommandTrainer ok(script.string(), std::chrono::seconds(30));
    const auto handle = ok.train(req);
    CHECK(handle.checkpoint.ends_with("ckpt-true"));
    CHECK_FALSE(handle.store);

    ExternalCommandTrainer failing("exit 1", std::chrono::seconds(30));
    CHECK_THROWS_AS(failing.train(req), TrainerFailed);
    ExternalCommandTrainer silent("true", std::chrono::seconds(30));
    CHECK_THROWS_AS(silent.train(req), TrainerFailed);
    ExternalCommandTrainer slow("sleep 20 #", std::chrono::seconds(1));
    CHECK_THROWS_AS(slow.train(req), TrainerFailed);
    CHECK(shell_quote("a'b") == "'a'\\''b'");
}

TEST_CASE("schema ranking and active-learning selection") {
    std::vector<Episode> gen;
    const auto add = [&](const std::string& intent, int ok, int total) {
        for (int i = 0; i < total; ++i) {
            Episode e;
            e.goal = ApiCall{intent, {{"x", std::to_string(i)}}};
            e.success = i < ok;
            gen.push_back(e);
        }
    };
    add("C", 10, 10);
    add("A", 0, 10);
    add("B", 5, 10);
    add("D", 5, 10);
    const auto table = rank_schemas(gen);
    REQUIRE(table.size() == 4);
    CHECK(table[0].intent == "A");
    CHECK(table[1].intent == "B");
    CHECK(table[2].intent == "D");
    CHECK(table[3].intent == "C");

    std::vector<Episode> pool_train, pool_valid;
    for (int k = 0; k < 10; ++k) {
        for (int i = 0; i < 3; ++i) {
            Episode e;
            e.goal = ApiCall{"I" + std::to_string(k), {{"x", std::to_string(i)}}};
            e.success = true;
            pool_train.push_back(e);
            e.fold = Fold::Valid;
            pool_valid.push_back(e);
        }
    }
    std::vector<Episode> ranked_src;
    for (int k = 0; k < 10; ++k) {
        Episode e;
        e.goal = ApiCall{"I" + std::to_string(k), {}};
        e.success = k >= 8;
        ranked_src.push_back(e);
    }
    const auto ranked = rank_schemas(ranked_src);
    const auto sel = select_al_batch(ranked, pool_train, pool_valid, 8, 8, 1, {});
    CHECK(sel.intents.size() == 8);
    CHECK(sel.train_adds.size() == 8);
    CHECK(sel.valid_adds.size() == 8);
    for (const auto& e : sel.train_adds) CHECK(e.goal->intent != "I8");

    std::vector<Episode> small(pool_train.begin(), pool_train.begin() + 5);
    const auto short_sel = select_al_batch(ranked, small, pool_valid, 8, 8, 1, {});
    CHECK(short_sel.train_adds.size() == 5);
    CHECK_FALSE(short_sel.warnings.empty());

    CHECK(select_random_fewshot(pool_train, 0, 1).empty());
    CHECK(select_random_fewshot(pool_train, pool_train.size(), 1).size() == pool_train.size());
    CHECK(select_random_fewshot(pool_train, 7, 4) == select_random_fewshot(pool_train, 7, 4));
}
