#include <doctest.h>

#include "support.hpp"
#include "todsim/dialogue.hpp"
#include "todsim/error.hpp"

using namespace todsim;

TEST_CASE("serialize_call canonical forms") {
    CHECK(serialize_call({"BuyTicket", {{"qty", "2"}, {"movie", "Dune"}}}) ==
          "APICALL: api_name = BuyTicket ; movie = Dune ; qty = 2");
    CHECK(serialize_call({"X", {}}) == "APICALL: api_name = X");
    CHECK(serialize_call({"Note", {{"body", "a;b"}}}) == "APICALL: api_name = Note ; body = a\\;b");
}

TEST_CASE("parse_call") {
    CHECK(parse_call("APICALL: api_name = X") == ApiCall{"X", {}});
    const ApiCall loose = parse_call("APICALL: api_name=BuyTicket ;qty = 2; movie =Dune");
    CHECK(loose == ApiCall{"BuyTicket", {{"movie", "Dune"}, {"qty", "2"}}});
    CHECK(serialize_call(loose) == "APICALL: api_name = BuyTicket ; movie = Dune ; qty = 2");
    CHECK_THROWS_AS(parse_call("APICALL: movie = Dune"), ParseError);
    CHECK_THROWS_AS(parse_call("hello"), ParseError);
    CHECK_THROWS_AS(parse_call("APICALL: api_name = X ; a = 1 ; a = 2"), ParseError);
    CHECK_THROWS_AS(parse_call("APICALL: api_name = X ; a = b\\"), ParseError);
    CHECK(parse_call("APICALL: api_name = X ; eq = a=b").slots.at("eq") == "a=b");
}

TEST_CASE("calls_equal ignores order and value whitespace") {
    CHECK(calls_equal({"BuyTicket", {{"qty", "2"}, {"movie", "Dune"}}}, {"BuyTicket", {{"movie", "Dune "}, {"qty", "2"}}}));
    CHECK_FALSE(calls_equal({"BuyTicket", {{"qty", "2"}}}, {"BuyTicket", {{"qty", "3"}}}));
    CHECK_FALSE(calls_equal({"A", {}}, {"B", {}}));
    CHECK_FALSE(calls_equal({"A", {{"x", "1"}}}, {"A", {{"x", "1"}, {"y", "2"}}}));
}

TEST_CASE("random calls round-trip") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const ApiCall c = test::random_call(rng);
        const std::string s = serialize_call(c);
        const ApiCall back = parse_call(s);
        CHECK(calls_equal(c, back));
        CHECK(serialize_call(back) == s);
    }
}

TEST_CASE("schemas and responses") {
    const ApiSchema s{"BuyTicket", {"qty", "movie"}};
    CHECK(serialize_schema(s) == "SCHEMA: api_name = BuyTicket ; slots = movie,qty");
    CHECK(parse_schema(serialize_schema(s)) == s);
    CHECK(schema_of({"BuyTicket", {{"movie", "Dune"}, {"qty", "2"}}}) == s);

    CHECK(parse_response("APIRESP: API_FAIL").is_failure());
    CHECK(serialize_response(ApiResponse::failure()) == kFailureSentinel);
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const ApiResponse r = ApiResponse::ok(test::random_slots(rng));
        CHECK(parse_response(serialize_response(r)) == r);
    }
}

TEST_CASE("turn cycle and success") {
    const ApiCall goal{"Find", {{"a", "1"}}};
    Episode e;
    e.goal = goal;
    e.turns = {{Speaker::User, "I need the a to be 1 ."},
               {Speaker::AssistantCall, serialize_call(goal)},
               {Speaker::ApiResp, "APIRESP: a = 1"},
               {Speaker::AssistantUtt, "Your request is confirmed ."},
               {Speaker::User, "[DONE]"}};
    CHECK_FALSE(check_turn_cycle(e.turns));
    CHECK(recompute_success(e));
    CHECK(count_calls(e) == 1);

    auto bad = e.turns;
    bad.erase(bad.begin() + 2);
    CHECK(check_turn_cycle(bad));
    auto early_done = e.turns;
    early_done.insert(early_done.begin(), Turn{Speaker::User, "[DONE]"});
    CHECK(check_turn_cycle(early_done));

    e.turns[1].text = serialize_call({"Find", {{"a", "2"}}});
    CHECK_FALSE(recompute_success(e));
}

TEST_CASE("episode json round-trip and id") {
    Episode e;
    e.goal = ApiCall{"Find", {{"a", "x;y"}}};
    e.schema = schema_of(*e.goal);
    e.turns = {{Speaker::User, "hi"}, {Speaker::AssistantUtt, "hello"}};
    e.domain = "Flights,Hotels";
    e.fold = Fold::Valid;
    e.origin = Origin::Human;
    const Episode back = episode_from_json(nlohmann::json::parse(to_jsonl_line(e)));
    CHECK(back == e);
    CHECK(episode_id(back) == episode_id(e));
    CHECK(domain_labels(e) == std::vector<std::string>{"Flights", "Hotels"});
    e.turns.back().text = "hello !";
    CHECK(episode_id(back) != episode_id(e));
}
