#include <random>

#include "doctest.h"
#include "support.hpp"
#include "ultraif/errors.hpp"
#include "ultraif/synthesize.hpp"

using namespace ultraif;
using testsupport::LambdaBackend;
using testsupport::ScriptedBackend;
using testsupport::canned;
using testsupport::judge_reply;
using testsupport::make_endpoint;

namespace {

CandidateResponse candidate(int index, const std::vector<bool>& yes) {
    CandidateResponse c;
    c.index = index;
    for (bool v : yes) {
        c.verdicts.per_question.push_back({"", v ? Verdict::Yes : Verdict::No});
    }
    c.refresh_tallies();
    return c;
}

// Direct transcription of the selection rule, kept deliberately naive.
Selection brute_force_select(const std::vector<CandidateResponse>& candidates) {
    Selection sel;
    for (const auto& c : candidates) {
        if (c.all_yes) {
            sel.chosen = c.index;
            break;
        }
    }
    int worst_index = -1;
    int worst_yes = -1;
    bool any_failed = false;
    for (const auto& c : candidates) {
        if (!c.all_yes) any_failed = true;
        if (worst_index < 0 || c.yes_count < worst_yes) {
            worst_index = c.index;
            worst_yes = c.yes_count;
        }
    }
    if (any_failed) sel.rejected = worst_index;
    sel.status = sel.chosen && sel.rejected ? OutcomeStatus::SftAndDpo
                 : sel.chosen              ? OutcomeStatus::SftOnly
                                           : OutcomeStatus::Dropped;
    return sel;
}

AugmentedInstruction augmented_with_questions(int n_questions, int iterations) {
    AugmentedInstruction aug;
    aug.root_id = "inst-x";
    aug.text = "Do the thing.";
    aug.iterations = iterations;
    for (int i = 0; i < n_questions; ++i) {
        aug.questions.push_back("Check " + std::to_string(i + 1) + "?");
    }
    return aug;
}

StagePolicy quick_policy() {
    StagePolicy policy;
    policy.retries = 1;
    policy.stage_seed = derive_seed(11, "synthesize");
    return policy;
}

}  // namespace

TEST_CASE("select_pairs hand cases") {
    // all pass: SFT only, nothing to reject
    auto sel = select_pairs({candidate(0, {true}), candidate(1, {true})});
    CHECK(sel.chosen == 0);
    CHECK_FALSE(sel.rejected.has_value());
    CHECK(sel.status == OutcomeStatus::SftOnly);

    // first full pass wins even when a later one also passes
    sel = select_pairs({candidate(0, {false, true}), candidate(1, {true, true}),
                        candidate(2, {true, true})});
    CHECK(sel.chosen == 1);
    CHECK(sel.rejected == 0);
    CHECK(sel.status == OutcomeStatus::SftAndDpo);

    // nobody passes: dropped, but the worst is still identified
    sel = select_pairs({candidate(0, {true, false}), candidate(1, {false, false})});
    CHECK_FALSE(sel.chosen.has_value());
    CHECK(sel.rejected == 1);
    CHECK(sel.status == OutcomeStatus::Dropped);

    // ties on yes_count resolve to the lowest index
    sel = select_pairs({candidate(0, {true, false}), candidate(1, {false, true}),
                        candidate(2, {true, true})});
    CHECK(sel.chosen == 2);
    CHECK(sel.rejected == 0);

    // zero questions: everyone passes vacuously
    sel = select_pairs({candidate(0, {}), candidate(1, {})});
    CHECK(sel.chosen == 0);
    CHECK(sel.status == OutcomeStatus::SftOnly);

    CHECK_THROWS_AS(select_pairs({}), InvariantViolation);
}

TEST_CASE("select_pairs equals the brute-force oracle on every verdict matrix") {
    // K in 1..3 candidates, q questions in 0..2, all 2^(K*q) matrices
    for (int k = 1; k <= 3; ++k) {
        for (int q = 0; q <= 2; ++q) {
            const int bits = k * q;
            for (int mask = 0; mask < (1 << bits); ++mask) {
                std::vector<CandidateResponse> candidates;
                for (int c = 0; c < k; ++c) {
                    std::vector<bool> yes;
                    for (int j = 0; j < q; ++j) {
                        yes.push_back((mask >> (c * q + j)) & 1);
                    }
                    candidates.push_back(candidate(c, yes));
                }
                Selection got = select_pairs(candidates);
                Selection want = brute_force_select(candidates);
                CAPTURE(k);
                CAPTURE(q);
                CAPTURE(mask);
                CHECK(got.chosen == want.chosen);
                CHECK(got.rejected == want.rejected);
                CHECK(got.status == want.status);
                if (got.chosen && got.rejected) {
                    CHECK(*got.chosen != *got.rejected);  // a pair is two distinct responses
                }
            }
        }
    }
}

TEST_CASE("multiplexed sampling issues one call carrying all completions") {
    AugmentedInstruction aug = augmented_with_questions(1, 1);
    int seen_n = 0;
    LambdaBackend backend([&](const ChatRequest& request) {
        seen_n = request.n_samples;
        return canned({"r1", "r2", "r3"});
    });
    auto result = sample_responses(make_endpoint(backend), aug, 3, true, 77);
    CHECK(seen_n == 3);
    CHECK(backend.calls == 1);
    CHECK(result.texts == std::vector<std::string>{"r1", "r2", "r3"});
    CHECK(result.attempts == 1);
}

TEST_CASE("sequential sampling salts each call differently") {
    AugmentedInstruction aug = augmented_with_questions(1, 1);
    std::vector<std::int64_t> seeds;
    LambdaBackend backend([&](const ChatRequest& request) {
        CHECK(request.n_samples == 1);
        seeds.push_back(*request.seed_hint);
        return canned({"text " + std::to_string(seeds.size())});
    });
    auto result = sample_responses(make_endpoint(backend), aug, 3, false, 77);
    CHECK(backend.calls == 3);
    REQUIRE(seeds.size() == 3);
    CHECK(seeds[0] != seeds[1]);
    CHECK(seeds[1] != seeds[2]);
    CHECK(result.texts == std::vector<std::string>{"text 1", "text 2", "text 3"});
}

TEST_CASE("a short completion list is a stage failure") {
    AugmentedInstruction aug = augmented_with_questions(0, 0);
    LambdaBackend backend([&](const ChatRequest&) { return canned({"only one"}); });
    CHECK_THROWS_AS(sample_responses(make_endpoint(backend), aug, 2, true, 77), StageFailure);
}

TEST_CASE("judge retries parse failures then falls back to all-NO") {
    AugmentedInstruction aug = augmented_with_questions(2, 2);

    ScriptedBackend recovers({"nonsense", judge_reply({true, false})});
    auto result = judge(make_endpoint(recovers), aug, "resp", 5, 0, quick_policy());
    CHECK_FALSE(result.judge_failed);
    CHECK(result.verdicts.yes_count() == 1);
    CHECK(result.retried == 1);
    CHECK(result.attempts == 2);

    ScriptedBackend hopeless({"bad", "also bad"});
    auto failed = judge(make_endpoint(hopeless), aug, "resp", 5, 0, quick_policy());
    CHECK(failed.judge_failed);
    REQUIRE(failed.verdicts.per_question.size() == 2);
    CHECK(failed.verdicts.yes_count() == 0);

    CHECK_THROWS_AS(judge(make_endpoint(hopeless), augmented_with_questions(0, 0), "resp", 5, 0,
                          quick_policy()),
                    InvariantViolation);
}

TEST_CASE("synthesize_record runs generate-then-evaluate end to end") {
    AugmentedInstruction aug = augmented_with_questions(2, 2);
    LambdaBackend responder([&](const ChatRequest&) { return canned({"good answer", "weak answer"}); });
    ScriptedBackend judge_backend({judge_reply({true, true}), judge_reply({true, false})});

    auto outcome = synthesize_record(make_endpoint(responder), make_endpoint(judge_backend), aug, 2,
                                     true, quick_policy());
    REQUIRE(outcome.candidates.size() == 2);
    CHECK(outcome.candidates[0].all_yes);
    CHECK(outcome.candidates[1].yes_count == 1);
    CHECK(outcome.chosen == 0);
    CHECK(outcome.rejected == 1);
    CHECK(outcome.status == OutcomeStatus::SftAndDpo);
    CHECK(outcome.attempts == 3);  // one response call + two judge calls
}

TEST_CASE("no questions means no judge calls and a vacuous pass") {
    AugmentedInstruction aug = augmented_with_questions(0, 0);
    LambdaBackend responder([&](const ChatRequest&) { return canned({"a", "b"}); });
    ScriptedBackend judge_backend({});  // would throw if consulted

    auto outcome = synthesize_record(make_endpoint(responder), make_endpoint(judge_backend), aug, 2,
                                     true, quick_policy());
    CHECK(outcome.status == OutcomeStatus::SftOnly);
    CHECK(outcome.chosen == 0);
    CHECK_FALSE(outcome.rejected.has_value());
    CHECK(judge_backend.calls() == 0);
    for (const auto& c : outcome.candidates) CHECK(c.all_yes);
}

TEST_CASE("judge_failed candidates can never be chosen") {
    AugmentedInstruction aug = augmented_with_questions(1, 1);
    LambdaBackend responder([&](const ChatRequest&) { return canned({"a", "b"}); });
    // candidate 0's verdicts never parse; candidate 1 passes
    ScriptedBackend judge_backend({"junk", "junk", judge_reply({true})});

    auto outcome = synthesize_record(make_endpoint(responder), make_endpoint(judge_backend), aug, 2,
                                     true, quick_policy());
    CHECK(outcome.candidates[0].judge_failed);
    CHECK(outcome.chosen == 1);
    CHECK(outcome.rejected == 0);
    CHECK(outcome.status == OutcomeStatus::SftAndDpo);
}

TEST_CASE("pass rates on the hand-checked mixed fixture") {
    // A: one question, one iteration; candidates [YES] and [NO]
    SynthesisOutcome a;
    a.augmented = augmented_with_questions(1, 1);
    a.candidates = {candidate(0, {true}), candidate(1, {false})};
    a.chosen = 0;
    a.rejected = 1;
    a.status = OutcomeStatus::SftAndDpo;

    // B: two questions, two iterations; [YES,NO] and [NO,NO]
    SynthesisOutcome b;
    b.augmented = augmented_with_questions(2, 2);
    b.candidates = {candidate(0, {true, false}), candidate(1, {false, false})};
    b.rejected = 1;
    b.status = OutcomeStatus::Dropped;

    // C: one question, one iteration; both candidates pass
    SynthesisOutcome c;
    c.augmented = augmented_with_questions(1, 1);
    c.candidates = {candidate(0, {true}), candidate(1, {true})};
    c.chosen = 0;
    c.status = OutcomeStatus::SftOnly;

    std::vector<SynthesisOutcome> outcomes = {a, b, c};
    PassRateReport report = pass_rate(outcomes);

    CHECK(report.instructions_total == 3);
    CHECK(report.instructions_with_chosen == 2);
    CHECK(report.instruction_rate == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(report.per_constraint_level[1].responses_total == 4);
    CHECK(report.per_constraint_level[1].responses_all_yes == 3);
    CHECK(report.per_constraint_level[1].rate == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(report.per_constraint_level[2].responses_total == 2);
    CHECK(report.per_constraint_level[2].responses_all_yes == 0);
    CHECK(report.per_constraint_level[2].rate == 0.0);
    CHECK(report.per_constraint_level[3].responses_total == 0);

    json j = pass_rate_to_json(report);
    CHECK(j["per_constraint_level"]["c=1"]["rate"] == doctest::Approx(0.75));
    CHECK(j["instruction_level"]["with_chosen"] == 2);
}

TEST_CASE("outcome JSON round-trips") {
    SynthesisOutcome outcome;
    outcome.augmented = augmented_with_questions(2, 2);
    outcome.candidates = {candidate(0, {true, true}), candidate(1, {false, true})};
    outcome.candidates[1].judge_failed = true;
    outcome.candidates[0].text = "winner";
    outcome.candidates[1].text = "loser";
    outcome.chosen = 0;
    outcome.rejected = 1;
    outcome.status = OutcomeStatus::SftAndDpo;
    outcome.attempts = 4;
    outcome.retried = 1;
    outcome.usage = {50, 60};

    SynthesisOutcome back = outcome_from_json(outcome_to_json(outcome));
    CHECK(back.augmented.root_id == outcome.augmented.root_id);
    CHECK(back.augmented.questions == outcome.augmented.questions);
    REQUIRE(back.candidates.size() == 2);
    CHECK(back.candidates[0].text == "winner");
    CHECK(back.candidates[0].all_yes);
    CHECK(back.candidates[1].judge_failed);
    CHECK(back.candidates[1].yes_count == 1);
    CHECK(back.chosen == outcome.chosen);
    CHECK(back.rejected == outcome.rejected);
    CHECK(back.status == outcome.status);
    CHECK(back.usage == outcome.usage);
}

TEST_CASE("randomized judge matrices keep selection consistent with tallies") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        int k = 1 + static_cast<int>(rng() % 4);
        int q = 1 + static_cast<int>(rng() % 3);
        std::vector<CandidateResponse> candidates;
        for (int c = 0; c < k; ++c) {
            std::vector<bool> yes;
            for (int j = 0; j < q; ++j) yes.push_back(rng() % 2 == 0);
            candidates.push_back(candidate(c, yes));
        }
        Selection sel = select_pairs(candidates);
        Selection want = brute_force_select(candidates);
        CHECK(sel.chosen == want.chosen);
        CHECK(sel.rejected == want.rejected);
        CHECK(sel.status == want.status);
    }
}
