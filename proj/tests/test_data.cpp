#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "support.hpp"
#include "todsim/data_io.hpp"
#include "todsim/error.hpp"
#include "todsim/fixtures.hpp"

using namespace todsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("todsim_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

Episode random_episode(Rng& rng) {
    Episode e;
    const ApiCall goal = test::random_call(rng);
    e.goal = goal;
    if (rng.bernoulli(0.5)) e.schema = schema_of(goal);
    e.turns = {{Speaker::User, test::random_value(rng)}};
    if (rng.bernoulli(0.5)) {
        e.turns.push_back({Speaker::AssistantCall, serialize_call(goal)});
        e.turns.push_back({Speaker::ApiResp, serialize_response(ApiResponse::ok(test::random_slots(rng)))});
    }
    e.turns.push_back({Speaker::AssistantUtt, test::random_value(rng)});
    e.success = recompute_success(e);
    e.domain = rng.bernoulli(0.5) ? "Payment" : "Flights";
    e.fold = static_cast<Fold>(rng.index(3));
    e.origin = static_cast<Origin>(rng.index(2));
    return e;
}

Episode two_call_episode(const ApiCall& a, const ApiCall& b) {
    Episode e;
    for (const auto& c : {a, b}) {
        e.turns.push_back({Speaker::User, "u"});
        e.turns.push_back({Speaker::AssistantCall, serialize_call(c)});
        e.turns.push_back({Speaker::ApiResp, std::string(kFailureSentinel)});
        e.turns.push_back({Speaker::AssistantUtt, "a"});
    }
    return e;
}

}  // namespace

TEST_CASE("episode files round-trip") {
    Rng rng(21);
    std::vector<Episode> eps;
    for (int i = 0; i < 100; ++i) eps.push_back(random_episode(rng));
    const auto path = scratch("eps.jsonl");
    write_episodes(path, eps);
    CHECK(load_episodes(path) == eps);

    write_file(path, "");
    CHECK(load_episodes(path).empty());

    write_episodes(path, std::vector<Episode>(eps.begin(), eps.begin() + 2));
    std::ofstream(path, std::ios::app) << "{\"goal\": ";
    try {
        load_episodes(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == 3);
    }
    CHECK_THROWS_AS(load_episodes(scratch("missing.jsonl")), IoError);
}

TEST_CASE("domain split") {
    Rng rng(4);
    std::vector<Episode> eps;
    for (int i = 0; i < 100; ++i) {
        Episode e = random_episode(rng);
        const int pick = static_cast<int>(rng.index(4));
        e.domain = pick == 0 ? "Flights" : pick == 1 ? "Payment" : pick == 2 ? "Flights,Messaging" : "Hotels,Flights";
        eps.push_back(e);
    }
    const auto split = split_by_domain(eps);
    std::size_t ood = 0, ood_test = 0;
    for (const auto& e : eps) {
        const bool out = e.domain.find("Payment") != std::string::npos || e.domain.find("Messaging") != std::string::npos;
        ood += out ? 1 : 0;
        ood_test += out && e.fold == Fold::Test ? 1 : 0;
    }
    CHECK(split.out_of_domain.size() == ood);
    CHECK(split.out_of_domain.test.size() == ood_test);
    CHECK(split.in_domain.size() + split.out_of_domain.size() == eps.size());

    std::vector<Episode> all_holdout(eps.begin(), eps.begin() + 5);
    for (auto& e : all_holdout) e.domain = "Payment";
    CHECK(split_by_domain(all_holdout).in_domain.size() == 0);
}

TEST_CASE("goal extraction") {
    Rng rng(8);
    std::vector<Episode> eps;
    for (int i = 0; i < 30; ++i) {
        const ApiCall a = test::random_call(rng);
        if (i % 7 == 3) {
            eps.push_back(two_call_episode(a, {a.intent + "_b", a.slots}));
        } else {
            eps.push_back(two_call_episode(a, a));
        }
    }
    const auto ex = extract_goals(eps);
    CHECK(ex.skipped_multi_goal == 4);
    CHECK(ex.goals.size() == 26);

    const std::vector<ApiSchema> one{schema_of(ex.goals.front())};
    const auto filtered = extract_goals(eps, &one);
    for (const auto& g : filtered.goals) CHECK(g.intent == one.front().intent);
}

TEST_CASE("sgd-like import") {
    const auto schema = scratch("schema.json");
    write_file(schema, R"([{"service_name": "Buses_1", "domain": "Buses",
        "intents": [{"name": "FindBus", "slots": ["from_city", "to_city"]}]}])");
    const auto dlg = scratch("dialogues_001.json");
    write_file(dlg, R"([{"dialogue_id": "d1", "services": ["Buses_1"], "turns": [
        {"speaker": "USER", "utterance": "bus from a to b"},
        {"speaker": "SYSTEM", "utterance": "found one",
         "service_call": {"method": "FindBus", "parameters": {"to_city": "b", "from_city": "a"}},
         "service_results": [{"fare": "10"}]}]}])");
    std::vector<ApiSchema> schemas;
    const std::vector<fs::path> files{dlg};
    const auto eps = import_sgd_like(schema, files, &schemas);
    REQUIRE(eps.size() == 1);
    CHECK(eps[0].turns.size() == 4);
    CHECK(eps[0].turns[1].text == "APICALL: api_name = FindBus ; from_city = a ; to_city = b");
    CHECK(eps[0].turns[2].text == "APIRESP: fare = 10");
    CHECK(eps[0].success);
    CHECK(eps[0].domain == "Buses");
    CHECK(schemas.size() == 1);

    const auto out = scratch("exported.jsonl");
    write_episodes(out, eps);
    CHECK(load_episodes(out) == eps);

    const auto empty = scratch("dialogues_empty.json");
    write_file(empty, "[]");
    CHECK(import_sgd_like(schema, std::vector<fs::path>{empty}).empty());

    const auto bad = scratch("dialogues_bad.json");
    write_file(bad, R"([{"dialogue_id": "d2", "services": ["Buses_1"], "turns": [
        {"speaker": "USER", "utterance": "x"},
        {"speaker": "SYSTEM", "utterance": "y", "service_call": {"method": "FindBus", "parameters": {"seats": "2"}}}]}])");
    CHECK_THROWS_AS(import_sgd_like(schema, std::vector<fs::path>{bad}), SchemaMismatch);
}

TEST_CASE("fixture world") {
    const World w = make_world({});
    CHECK(w.domains.size() == 12);
    for (const auto& e : w.human) {
        CHECK(e.success);
        CHECK(e.origin == Origin::Human);
        CHECK_FALSE(check_turn_cycle(e.turns));
    }
    const auto split = split_by_domain(w.human);
    CHECK(split.out_of_domain.size() == 4 * 2 * (8 + 2 + 4));
    CHECK(make_world({}).human == w.human);
}
