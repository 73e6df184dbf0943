#include <doctest.h>

#include <cmath>
#include <numeric>

#include "todsim/data_io.hpp"
#include "todsim/error.hpp"
#include "todsim/exemplar.hpp"
#include "todsim/fixtures.hpp"
#include "todsim/orchestrator.hpp"
#include "todsim/sampling.hpp"
#include "todsim/scripted_agents.hpp"
#include "todsim/templates.hpp"

using namespace todsim;

namespace {

double mass(const std::vector<std::pair<int, double>>& d) {
    return std::accumulate(d.begin(), d.end(), 0.0, [](double s, const auto& kv) { return s + kv.second; });
}

const ApiCall kTicket{"BuyTicket", {{"movie", "Dune"}, {"qty", "2"}}};

}  // namespace

TEST_CASE("nucleus_filter") {
    const std::vector<std::pair<int, double>> d{{0, 0.5}, {1, 0.3}, {2, 0.15}, {3, 0.05}};
    const auto kept = nucleus_filter(d, 0.9);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].second == doctest::Approx(0.5 / 0.95).epsilon(1e-12));
    CHECK(kept[1].second == doctest::Approx(0.3 / 0.95).epsilon(1e-12));
    CHECK(kept[2].second == doctest::Approx(0.15 / 0.95).epsilon(1e-12));
    CHECK(std::abs(mass(kept) - 1.0) < 1e-9);

    CHECK(nucleus_filter(d, 1.0) == d);
    const std::vector<std::pair<int, double>> u{{0, 0.25}, {1, 0.25}, {2, 0.25}, {3, 0.25}};
    CHECK(nucleus_filter(u, 0.9).size() == 4);
    CHECK_THROWS_AS(nucleus_filter(std::vector<std::pair<int, double>>{{0, 0.5}, {1, 0.2}}, 0.9), InvalidDistribution);

    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::pair<int, double>> r;
        double total = 0;
        for (int i = 0; i < 1 + static_cast<int>(rng.index(8)); ++i) {
            r.emplace_back(i, rng.uniform() + 1e-3);
            total += r.back().second;
        }
        for (auto& kv : r) kv.second /= total;
        const auto f = nucleus_filter(r, 0.05 + 0.95 * rng.uniform());
        CHECK(std::abs(mass(f) - 1.0) < 1e-9);
        for (const auto& kv : f) CHECK(std::any_of(r.begin(), r.end(), [&](const auto& x) { return x.first == kv.first; }));
    }
}

TEST_CASE("scripted user") {
    ScriptedUser user;
    Observation obs{Role::User, serialize_call(kTicket), {}, {}};
    CHECK(user.act(obs) == "I need the movie to be Dune .");

    ScriptedUser done;
    Observation after{Role::User, serialize_call(kTicket),
                      {{Speaker::User, templates::inform("movie", "Dune")},
                       {Speaker::AssistantCall, serialize_call(kTicket)},
                       {Speaker::ApiResp, "APIRESP: code = 1"},
                       {Speaker::AssistantUtt, std::string(templates::kConfirmed)}},
                      {}};
    CHECK(done.act(after) == kDoneToken);

    ScriptedUser bad;
    CHECK_THROWS_AS(bad.act({Role::User, "SCHEMA: api_name = X ; slots = a", {}, {}}), MalformedGrounding);
}

TEST_CASE("scripted oracle pair succeeds with one call") {
    auto user = scripted_user_factory()();
    auto assistant = scripted_assistant_factory()();
    ApiTable api;
    api.put(kTicket, ApiResponse::ok({{"code", "A1"}}));
    SimConfig cfg;
    cfg.schema_aware = true;
    const auto r = run_dialogue(*user, *assistant, api, kTicket, schema_of(kTicket), cfg, 1);
    CHECK_FALSE(r.error);
    CHECK(r.episode.success);
    CHECK(count_calls(r.episode) == 1);
    CHECK(calls_equal(parse_call(r.episode.turns[r.episode.turns.size() - 4].text), kTicket));
    CHECK(r.episode.turns.back().is_done());
}

TEST_CASE("noise corrupts values consistently") {
    NoiseOptions always{1.0, {}};
    auto user = noisy_factory(scripted_user_factory({2}), always)();
    const std::string out = user->act({Role::User, serialize_call(kTicket), {}, {}});
    CHECK(out == templates::inform("movie", "Dunex") + " " + templates::inform("qty", "2x"));

    NoiseOptions per{0.0, {{"Other", 1.0}}};
    auto clean = noisy_factory(scripted_user_factory({2}), per)();
    CHECK(clean->act({Role::User, serialize_call(kTicket), {}, {}}).find("Dunex") == std::string::npos);
}

TEST_CASE("exemplar training cardinality and weights") {
    Episode e;
    e.goal = kTicket;
    e.turns = {{Speaker::User, templates::inform("movie", "Dune")},
               {Speaker::AssistantUtt, templates::request("qty")},
               {Speaker::User, templates::inform("qty", "2")},
               {Speaker::AssistantUtt, "ok"}};
    ExemplarStore store;
    train_exemplar(store, e, TrainRole::User);
    CHECK(store.size() == 2);
    const auto w1 = store.total_weight();
    train_exemplar(store, e, TrainRole::User);
    CHECK(store.size() == 2);
    CHECK(store.total_weight() == 2 * w1);
    for (const auto& entry : store.entries()) CHECK(entry.weight == 2);

    const auto back = ExemplarStore::from_json(store.to_json());
    CHECK(back == store);
}

TEST_CASE("multiset jaccard") {
    const std::vector<std::uint32_t> a{1, 1, 2, 3}, b{1, 2, 2, 4};
    // min counts: 1 + 1 = 2; max counts: 2 + 2 + 1 + 1 = 6
    CHECK(multiset_jaccard(a, b) == doctest::Approx(2.0 / 6.0));
    CHECK(multiset_jaccard(a, a) == 1.0);
    CHECK(multiset_jaccard({}, {}) == 1.0);
    CHECK(multiset_jaccard(a, {}) == 0.0);
}

TEST_CASE("exemplar assistant replays a seen out-of-domain goal") {
    WorldConfig wc;
    wc.seed = 5;
    const World world = make_world(wc);
    const auto split = split_by_domain(world.human);
    std::vector<Episode> seen(split.out_of_domain.train.begin(), split.out_of_domain.train.begin() + 30);
    const auto store = std::make_shared<ExemplarStore>(train_exemplar(ExemplarStore{}, seen, TrainRole::Both));

    SimConfig cfg;
    cfg.decode = {DecodeMode::Greedy, 1.0, 0};
    std::size_t wins = 0;
    for (const auto& e : seen) {
        auto user = exemplar_factory(store, Role::User)();
        auto assistant = exemplar_factory(store, Role::Assistant)();
        const auto r = run_dialogue(*user, *assistant, world.api, *e.goal, std::nullopt, cfg, 1);
        bool intent_ok = false;
        for (const auto& t : r.episode.turns) {
            if (t.speaker == Speaker::AssistantCall) intent_ok = intent_ok || parse_call(t.text).intent == e.goal->intent;
        }
        CHECK(intent_ok);
        wins += r.episode.success ? 1 : 0;
    }
    CHECK(wins == seen.size());
}

TEST_CASE("exemplar decoding is deterministic per seed") {
    WorldConfig wc;
    const World world = make_world(wc);
    const auto split = split_by_domain(world.human);
    const auto store = std::make_shared<ExemplarStore>(train_exemplar(ExemplarStore{}, split.in_domain.train, TrainRole::Both, true));
    SimConfig cfg;
    cfg.schema_aware = true;
    cfg.rollouts_per_goal = 3;
    const auto goals = extract_goals(split.out_of_domain.test).goals;
    const auto a = run_batch(goals, exemplar_factory(store, Role::User), exemplar_factory(store, Role::Assistant), world.api, cfg);
    const auto b = run_batch(goals, exemplar_factory(store, Role::User), exemplar_factory(store, Role::Assistant), world.api, cfg);
    CHECK(a.episodes == b.episodes);
    CHECK_THROWS_AS(exemplar_factory(std::make_shared<ExemplarStore>(), Role::User)()->act({Role::User, serialize_call(kTicket), {}, {}}),
                    AgentUnavailable);
}
