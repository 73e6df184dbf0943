#include <doctest.h>

#include <httplib.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "oracles.hpp"
#include "todsim/acute_eval.hpp"
#include "todsim/error.hpp"
#include "todsim/eval_service.hpp"
#include "todsim/fixtures.hpp"
#include "todsim/orchestrator.hpp"
#include "todsim/scripted_agents.hpp"

using namespace todsim;
namespace fs = std::filesystem;

namespace {

struct Runs {
    std::map<std::string, std::vector<Episode>> runs;
    std::vector<ApiCall> goals;
    std::vector<Episode> gold;

    Runs() {
        const World world = make_world({});
        goals = goals_of(world, {"Flights", "Hotels", "Movies"}, Fold::Test);
        goals.resize(10);
        SimConfig cfg;
        cfg.schema_aware = false;
        cfg.rollouts_per_goal = 1;
        const auto known = world.schemas;
        const auto run = [&](double eps) {
            auto assistant = scripted_assistant_factory({known});
            if (eps > 0) assistant = noisy_factory(assistant, {eps, {}});
            return run_batch(goals, scripted_user_factory(), assistant, world.api, cfg).episodes;
        };
        runs["a"] = run(0.0);
        runs["b"] = run(0.3);
        runs["c"] = run(0.6);
        for (const auto& e : world.human) {
            if (e.fold == Fold::Test) gold.push_back(e);
        }
        gold.resize(4);
    }
};

fs::path scratch_dir() {
    const auto dir = fs::temp_directory_path() / ("todsim_eval_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Annotation pick(const EvalTask& t, const std::string& annotator, const std::string& system) {
    return {t.id, annotator, t.left_system == system ? Choice::Left : Choice::Right, std::nullopt, ""};
}

Annotation fail_control(const EvalTask& t, const std::string& annotator) {
    return pick(t, annotator, std::string(kRepetitiveSystem));
}

}  // namespace

TEST_CASE("binomial test") {
    CHECK(binomial_p(10, 10) == 0.001953125);
    CHECK(binomial_p(5, 10) == 1.0);
    CHECK_THROWS_AS(binomial_p(0, 0), InvalidCounts);
    CHECK(std::abs(binomial_p(180, 300) - oracle::binomial_p(180, 300)) <= 1e-12);
    CHECK(binomial_p(320, 400) < kSignificance);
    CHECK(binomial_p(3, 7) == binomial_p(4, 7));
    double prev = 1.0;
    for (std::uint64_t k = 1000; k <= 1100; ++k) {
        const double p = binomial_p(k, 2000);
        CHECK(p <= prev);
        prev = p;
    }
    CHECK_THROWS_AS(binomial_p(11, 10), InvalidCounts);
}

TEST_CASE("presentable turns hide calls") {
    const std::vector<Turn> turns{{Speaker::User, "hi"},
                                  {Speaker::AssistantCall, "APICALL: api_name = X"},
                                  {Speaker::ApiResp, "APIRESP: a = 1"},
                                  {Speaker::AssistantUtt, "see APICALL: api_name = X"},
                                  {Speaker::User, "[DONE]"}};
    const auto shown = presentable_turns(turns);
    REQUIRE(shown.size() == 2);
    CHECK(shown[0].text == "hi");
    CHECK(shown[1].text.find("APICALL:") == std::string::npos);
}

TEST_CASE("task building") {
    Runs r;
    const auto tasks = build_tasks(r.runs, r.goals, {}, {5, 0});
    CHECK(tasks.size() == 30);
    CHECK(tasks == build_tasks(r.runs, r.goals, {}, {5, 0}));
    bool swapped = false;
    for (const auto& t : tasks) {
        CHECK(t.goal_matched);
        CHECK_FALSE(t.is_control);
        swapped = swapped || t.left_system > t.right_system;
        const std::string dump = to_json(t).dump();
        CHECK(dump.find("APICALL:") == std::string::npos);
        CHECK(dump.find("APIRESP:") == std::string::npos);
        CHECK(eval_task_from_json(to_json(t)) == t);
    }
    CHECK(swapped);

    const auto with_controls = build_tasks(r.runs, r.goals, r.gold, {5, 2});
    CHECK(with_controls.size() == 32);
    CHECK(std::count_if(with_controls.begin(), with_controls.end(), [](const auto& t) { return t.is_control; }) == 2);

    auto missing = r.runs;
    missing["c"].pop_back();
    CHECK_THROWS_AS(build_tasks(missing, r.goals, {}, {5, 0}), MissingEpisode);
}

TEST_CASE("gating and win matrix") {
    Runs r;
    const auto tasks = build_tasks(r.runs, r.goals, r.gold, {1, 2});
    std::vector<const EvalTask*> controls, comps;
    for (const auto& t : tasks) (t.is_control ? controls : comps).push_back(&t);

    std::vector<Annotation> anns;
    for (int k = 0; k < 10; ++k) {
        const std::string who = "ann" + std::to_string(k);
        anns.push_back(k < 3 && k != 1 ? fail_control(*controls[0], who) : pick(*controls[0], who, "gold"));
        anns.push_back(k == 1 ? fail_control(*controls[1], who) : pick(*controls[1], who, "gold"));
        for (const auto* t : comps) {
            const bool a_vs_b = (t->left_system == "a" && t->right_system == "b") || (t->left_system == "b" && t->right_system == "a");
            if (a_vs_b) anns.push_back(pick(*t, who, k < 3 ? "b" : "a"));
        }
    }
    const auto excluded = gate_annotators(anns, tasks);
    CHECK(excluded == std::set<std::string>{"ann0", "ann1", "ann2"});
    CHECK(gate_annotators(anns, tasks, 1).empty());

    const auto m = win_matrix(anns, tasks, excluded);
    const auto idx = [&](const std::string& s) { return std::find(m.systems.begin(), m.systems.end(), s) - m.systems.begin(); };
    const auto a = idx("a"), b = idx("b"), c = idx("c");
    CHECK(m.n[a][b] == 7 * 10);
    CHECK(m.wins[a][b] == 1.0);
    CHECK(m.wins[b][a] == 0.0);
    CHECK(m.significant[a][b]);
    CHECK_FALSE(m.wins[a][c]);
    CHECK_FALSE(m.wins[a][a]);

    const auto unfiltered = win_matrix(anns, tasks);
    CHECK(*unfiltered.wins[a][b] + *unfiltered.wins[b][a] == doctest::Approx(1.0));
    CHECK(*unfiltered.wins[a][b] == doctest::Approx(0.7));
}

TEST_CASE("evaluation service over HTTP") {
    Runs r;
    const auto dir = scratch_dir();
    const auto tasks = build_tasks(r.runs, r.goals, r.gold, {2, 1});
    write_tasks(dir / "tasks.jsonl", tasks);
    CHECK(load_tasks(dir / "tasks.jsonl") == tasks);

    EvalServiceOptions opts;
    opts.tasks_file = dir / "tasks.jsonl";
    opts.annotation_log = dir / "annotations.jsonl";
    opts.admin_token = "secret";
    int port = 0;
    std::string first_id;
    {
        EvalService service(opts);
        port = service.start();
        httplib::Client cli("127.0.0.1", port);

        CHECK(cli.Get("/api/next-task")->status == 400);
        auto res = cli.Get("/api/next-task?annotator=alice");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        const auto view = nlohmann::json::parse(res->body);
        first_id = view.at("task_id");
        CHECK(view.at("labels") == nlohmann::json::array({"Assistant 1", "Assistant 2"}));
        CHECK(res->body.find("APICALL:") == std::string::npos);
        CHECK(res->body.find("APIRESP:") == std::string::npos);
        CHECK(res->body.find("left_system") == std::string::npos);
        const auto& claimed = *std::find_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.id == first_id; });
        CHECK(claimed.is_control);

        // Same annotator re-asking gets the held task; another annotator does not.
        CHECK(nlohmann::json::parse(cli.Get("/api/next-task?annotator=alice")->body).at("task_id") == first_id);
        CHECK(nlohmann::json::parse(cli.Get("/api/next-task?annotator=bob")->body).at("task_id") != first_id);

        const nlohmann::json ann = {{"task_id", first_id}, {"annotator_id", "alice"}, {"choice", "Left"}};
        CHECK(cli.Post("/api/annotate", ann.dump(), "application/json")->status == 204);
        CHECK(cli.Post("/api/annotate", ann.dump(), "application/json")->status == 409);
        CHECK(cli.Post("/api/annotate", R"({"task_id":"nope","annotator_id":"alice","choice":"Left"})", "application/json")->status == 404);
        CHECK(cli.Post("/api/annotate", "not json", "application/json")->status == 400);
        CHECK(cli.Post("/api/annotate", R"({"task_id":"x","annotator_id":"a","choice":"Middle"})", "application/json")->status == 400);

        CHECK(cli.Get("/api/results")->status == 403);
        httplib::Headers wrong{{"Authorization", "Bearer nope"}};
        CHECK(cli.Get("/api/results", wrong)->status == 403);
        httplib::Headers auth{{"Authorization", "Bearer secret"}};
        auto results = cli.Get("/api/results", auth);
        REQUIRE(results);
        CHECK(results->status == 200);
        CHECK(nlohmann::json::parse(results->body).contains("systems"));

        std::size_t served = 1;
        while (true) {
            auto next = cli.Get("/api/next-task?annotator=alice");
            if (next->status == 204) break;
            const std::string id = nlohmann::json::parse(next->body).at("task_id");
            const nlohmann::json a = {{"task_id", id}, {"annotator_id", "alice"}, {"choice", "Right"}};
            REQUIRE(cli.Post("/api/annotate", a.dump(), "application/json")->status == 204);
            ++served;
        }
        // The task bob holds is not served to alice while his lease lasts.
        CHECK(served == tasks.size() - 1);
        service.stop();
    }

    EvalService reloaded(opts);
    CHECK(reloaded.annotations().size() == tasks.size() - 1);
    const auto last = reloaded.next_task("alice");
    REQUIRE(last);
    CHECK(reloaded.annotate({last->id, "alice", Choice::Left, std::nullopt, ""}) == EvalService::Submit::Accepted);
    CHECK_FALSE(reloaded.next_task("alice"));
    CHECK(reloaded.annotate({first_id, "alice", Choice::Left, std::nullopt, ""}) == EvalService::Submit::Duplicate);
}
