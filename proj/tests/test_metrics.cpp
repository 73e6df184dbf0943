#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "todsim/error.hpp"
#include "todsim/metrics.hpp"
#include "todsim/sampling.hpp"

using namespace todsim;

namespace {

std::vector<Tokens> random_corpus(Rng& rng, std::size_t n, std::size_t vocab) {
    std::vector<Tokens> out(n);
    for (auto& s : out) {
        const std::size_t len = rng.index(12);
        for (std::size_t i = 0; i < len; ++i) s.push_back("w" + std::to_string(rng.index(vocab)));
    }
    return out;
}

Episode with_success(bool ok, std::size_t calls = 0) {
    Episode e;
    e.goal = ApiCall{"G", {}};
    e.success = ok;
    for (std::size_t i = 0; i < calls; ++i) {
        e.turns.push_back({Speaker::User, "u"});
        e.turns.push_back({Speaker::AssistantCall, "APICALL: api_name = H"});
        e.turns.push_back({Speaker::ApiResp, "APIRESP: API_FAIL"});
        e.turns.push_back({Speaker::AssistantUtt, "a"});
    }
    return e;
}

}  // namespace

TEST_CASE("bleu4 against the brute-force oracle") {
    Rng rng(17);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 1 + rng.index(6);
        const auto hyp = random_corpus(rng, n, 4 + rng.index(6));
        const auto ref = random_corpus(rng, n, 4 + rng.index(6));
        CHECK(std::abs(bleu4(hyp, ref) - oracle::bleu4(hyp, ref)) <= 1e-9);
        auto ph = hyp, pr = ref;
        std::reverse(ph.begin(), ph.end());
        std::reverse(pr.begin(), pr.end());
        CHECK(std::abs(bleu4(ph, pr) - bleu4(hyp, ref)) <= 1e-12);
    }
}

TEST_CASE("bleu4 boundaries") {
    const std::vector<Tokens> s{{"the", "cat", "sat", "down", "today"}};
    CHECK(bleu4(s, s) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<Tokens> other{{"a", "b", "c", "d", "e"}};
    CHECK(bleu4(other, s) <= 1e-6);
    CHECK_THROWS_AS(bleu4(std::vector<Tokens>{}, std::vector<Tokens>{}), EmptyInput);
    CHECK_THROWS_AS(bleu4(s, std::vector<Tokens>{}), AlignmentError);
}

TEST_CASE("token exact match") {
    const std::vector<Tokens> a{{"x"}, {"y"}, {"z"}, {"w"}};
    auto b = a;
    CHECK(token_exact_match(a, b) == 1.0);
    b[2] = {"q"};
    CHECK(token_exact_match(a, b) == 0.75);
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        auto c = random_corpus(rng, 5, 6);
        for (auto& s : c) s.insert(s.end(), {"p", "q", "r", "s"});
        CHECK(token_exact_match(c, c) == 1.0);
        CHECK(bleu4(c, c) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("task success rate") {
    std::vector<Episode> eps;
    for (int i = 0; i < 20; ++i) eps.push_back(with_success(i < 5));
    CHECK(task_success_rate(eps) == 0.25);
    CHECK_THROWS_AS(task_success_rate(std::vector<Episode>{}), EmptyInput);
    const auto by = tsr_by_intent(eps);
    CHECK(by.at("G").episodes == 20);
    CHECK(by.at("G").goals == 1);
}

TEST_CASE("joint goal accuracy") {
    using Rounds = std::vector<std::optional<ApiCall>>;
    const ApiCall c1{"A", {{"x", "1"}}}, c2{"A", {{"x", "2"}}}, c3{"B", {}};
    Rounds gold(10);
    gold[1] = c1;
    gold[4] = c2;
    gold[8] = c3;
    Rounds hyp(10);
    hyp[1] = c1;
    hyp[4] = c2;
    const auto f = joint_goal_accuracy(gold, hyp);
    CHECK(f.hits == 9);
    CHECK(f.total == 10);
    CHECK(joint_goal_accuracy(gold, gold).value() == 1.0);
    CHECK(joint_goal_accuracy(gold, Rounds(10), true).value() == 0.0);
    CHECK_THROWS_AS(joint_goal_accuracy(gold, Rounds(9)), AlignmentError);
    CHECK_THROWS_AS(joint_goal_accuracy(Rounds(3), Rounds(3), true), EmptyInput);
}

TEST_CASE("gold rounds from episodes") {
    const auto rounds = gold_round_calls(std::vector<Episode>{with_success(true, 2)});
    REQUIRE(rounds.size() == 2);
    CHECK(rounds[0]->intent == "H");
}

TEST_CASE("error reduction") {
    const Rational r1 = error_reduction(parse_decimal("0.777"), parse_decimal("0.860"));
    CHECK(r1 == Rational(83, 223));
    CHECK(error_reduction(0.973, 0.977) == doctest::Approx(4.0 / 27.0));
    CHECK(error_reduction(0.5, 0.5) == 0.0);
    CHECK(error_reduction(0.5, 0.6) < error_reduction(0.5, 0.7));
    CHECK_THROWS_AS(error_reduction(1.0, 1.0), DegenerateBase);
    CHECK(parse_decimal("1") == Rational(1));
    CHECK(parse_decimal(".5") == Rational(1, 2));
    CHECK_THROWS(parse_decimal("x"));
}

TEST_CASE("calls per dialogue") {
    CHECK(calls_per_dialogue(std::vector<Episode>{with_success(true, 1), with_success(true, 3)}) == 2.0);
    CHECK(calls_per_dialogue(std::vector<Episode>{with_success(false)}) == 0.0);
}

TEST_CASE("metric report json round-trip") {
    std::vector<Episode> eps{with_success(true, 1), with_success(false, 2)};
    auto report = online_report(eps);
    report.jga = 0.5;
    const auto back = metric_report_from_json(to_json(report));
    CHECK(to_json(back) == to_json(report));
    CHECK(report.n_episodes == 2);
}
