#include "prefgen/pairing.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace prefgen;

namespace {

CandidateOutput ok_candidate(const std::string& id, int index, const std::string& thought,
                             const std::string& response) {
    return make_candidate(id, index,
                          "Here is my thought process:\n" + thought + "\nHere is my response:\n" + response,
                          generic_thought_prompt());
}

CandidateOutput broken_candidate(const std::string& id, int index) {
    return make_candidate(id, index, "drifts off without any marker", generic_thought_prompt());
}

PairContext ctx() { return {3, 0.2, "pointwise"}; }

bool pair_equal(const PreferencePair& a, const PreferencePair& b) {
    bool rejected_score_equal =
        (std::isnan(a.meta.rejected_score) && std::isnan(b.meta.rejected_score)) ||
        a.meta.rejected_score == b.meta.rejected_score;
    return a.instruction_id == b.instruction_id && a.iteration == b.iteration &&
           a.prompt == b.prompt && a.chosen == b.chosen && a.rejected == b.rejected &&
           a.meta.chosen_score == b.meta.chosen_score && rejected_score_equal &&
           a.meta.rho == b.meta.rho && a.meta.judge_kind == b.meta.judge_kind &&
           a.meta.rejected_is_parse_error == b.meta.rejected_is_parse_error;
}

} // namespace

TEST(BuildPair, ArgmaxArgmin) {
    std::vector<CandidateOutput> cands = {ok_candidate("q", 0, "t0", "r0"),
                                          ok_candidate("q", 1, "t1", "r1"),
                                          ok_candidate("q", 2, "t2", "r2")};
    auto pair = build_pair(cands, {0.1, 0.9, 0.5}, "P", ctx());
    ASSERT_TRUE(pair.has_value());
    EXPECT_EQ(pair->chosen, cands[1].raw_text);
    EXPECT_EQ(pair->rejected, cands[0].raw_text);
    EXPECT_EQ(pair->meta.chosen_score, 0.9);
    EXPECT_EQ(pair->meta.rejected_score, 0.1);
    EXPECT_EQ(pair->iteration, 3);
    EXPECT_FALSE(pair->meta.rejected_is_parse_error);
}

TEST(BuildPair, AllTiedSkips) {
    std::vector<CandidateOutput> cands = {ok_candidate("q", 0, "a", "x"),
                                          ok_candidate("q", 1, "b", "y"),
                                          ok_candidate("q", 2, "c", "z")};
    EXPECT_FALSE(build_pair(cands, {0.4, 0.4, 0.4}, "P", ctx()).has_value());
}

TEST(BuildPair, TieBreaksToLowestIndex) {
    std::vector<CandidateOutput> cands = {ok_candidate("q", 0, "a", "x"),
                                          ok_candidate("q", 1, "b", "y"),
                                          ok_candidate("q", 2, "c", "z")};
    auto pair = build_pair(cands, {0.9, 0.9, 0.1}, "P", ctx());
    ASSERT_TRUE(pair.has_value());
    EXPECT_EQ(pair->chosen, cands[0].raw_text);
    EXPECT_EQ(pair->rejected, cands[2].raw_text);
}

TEST(BuildPair, ParseErrorNeverChosen) {
    // The parse-error candidate has the best score but cannot participate.
    std::vector<CandidateOutput> cands = {broken_candidate("q", 0),
                                          ok_candidate("q", 1, "b", "y"),
                                          ok_candidate("q", 2, "c", "z")};
    auto pair = build_pair(cands, {99.0, 0.5, 0.1}, "P", ctx());
    ASSERT_TRUE(pair.has_value());
    EXPECT_EQ(pair->chosen, cands[1].raw_text);
    EXPECT_EQ(pair->rejected, cands[2].raw_text);
}

TEST(BuildPair, FewerThanTwoParsedSkips) {
    std::vector<CandidateOutput> cands = {broken_candidate("q", 0), ok_candidate("q", 1, "b", "y")};
    EXPECT_FALSE(build_pair(cands, {0.1, 0.9}, "P", ctx()).has_value());
}

TEST(BuildPair, ChosenScoreNeverBelowRejected) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<CandidateOutput> cands;
        std::vector<double> scores;
        for (int i = 0; i < 6; ++i) {
            cands.push_back(ok_candidate("q", i, "t", "resp" + std::to_string(i)));
            scores.push_back(val(rng));
        }
        auto pair = build_pair(cands, scores, "P", ctx());
        if (pair) EXPECT_GE(pair->meta.chosen_score, pair->meta.rejected_score);
    }
}

namespace {

std::vector<PreferencePair> normal_pairs(int n) {
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < n; ++i) {
        PreferencePair p;
        p.instruction_id = "n" + std::to_string(i);
        p.iteration = 0;
        p.prompt = "P";
        p.chosen = "good";
        p.rejected = "bad";
        p.meta = {1.0, 0.0, 0.0, "pointwise", false};
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<InjectionCandidate> injection_pool(int n) {
    std::vector<InjectionCandidate> pool;
    for (int i = 0; i < n; ++i) {
        pool.push_back({"e" + std::to_string(i), "P", "best-ok", 1.5, "broken raw"});
    }
    return pool;
}

} // namespace

TEST(Inject, CapEnforcedExactly) {
    // 100 normal pairs, 30 eligible, cap 0.10: 11/111 <= 0.10 but 12/112 > 0.10.
    auto out = inject_parse_error_pairs(normal_pairs(100), injection_pool(30), 0.10, 7, ctx());
    EXPECT_EQ(out.size(), 111u);
    int injected = 0;
    for (const auto& p : out)
        if (p.meta.rejected_is_parse_error) ++injected;
    EXPECT_EQ(injected, 11);
    for (const auto& p : out) {
        if (p.meta.rejected_is_parse_error) EXPECT_TRUE(std::isnan(p.meta.rejected_score));
    }
}

TEST(Inject, CapZeroInjectsNothing) {
    auto out = inject_parse_error_pairs(normal_pairs(100), injection_pool(30), 0.0, 7, ctx());
    EXPECT_EQ(out.size(), 100u);
}

TEST(Inject, EmptyPoolLeavesPairsUnchanged) {
    auto out = inject_parse_error_pairs(normal_pairs(10), {}, 0.10, 7, ctx());
    EXPECT_EQ(out.size(), 10u);
}

TEST(Inject, PoolSmallerThanCapTakesWholePool) {
    auto out = inject_parse_error_pairs(normal_pairs(100), injection_pool(3), 0.10, 7, ctx());
    EXPECT_EQ(out.size(), 103u);
}

TEST(Inject, DeterministicSelection) {
    auto a = inject_parse_error_pairs(normal_pairs(50), injection_pool(20), 0.10, 7, ctx());
    auto b = inject_parse_error_pairs(normal_pairs(50), injection_pool(20), 0.10, 7, ctx());
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(pair_equal(a[i], b[i]));
    // A different seed picks a different subset (with overwhelming odds).
    auto c = inject_parse_error_pairs(normal_pairs(50), injection_pool(20), 0.10, 8, ctx());
    bool any_diff = false;
    for (size_t i = 0; i < a.size() && i < c.size(); ++i) {
        if (!pair_equal(a[i], c[i])) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Inject, FractionNeverExceedsCap) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        int normal = 1 + static_cast<int>(rng() % 80);
        int pool = static_cast<int>(rng() % 40);
        double cap = (rng() % 2) ? 0.10 : 0.25;
        auto out = inject_parse_error_pairs(normal_pairs(normal), injection_pool(pool), cap, trial, ctx());
        int injected = static_cast<int>(out.size()) - normal;
        EXPECT_LE(static_cast<double>(injected), cap * static_cast<double>(out.size()) + 1e-12);
    }
}

TEST(EmitDataset, RoundTrip) {
    test_util::TempDir dir("emit");
    auto pairs = inject_parse_error_pairs(normal_pairs(5), injection_pool(4), 0.5, 7, ctx());
    auto path = dir.path() / "data.jsonl";
    emit_dataset(pairs, path);
    auto parsed = read_dataset(path);
    ASSERT_EQ(parsed.size(), pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) EXPECT_TRUE(pair_equal(pairs[i], parsed[i]));
}

TEST(EmitDataset, ByteIdenticalAcrossRuns) {
    test_util::TempDir dir("emit");
    auto pairs = normal_pairs(7);
    auto p1 = dir.path() / "a.jsonl";
    auto p2 = dir.path() / "b.jsonl";
    emit_dataset(pairs, p1);
    emit_dataset(pairs, p2);
    EXPECT_EQ(test_util::read_file(p1), test_util::read_file(p2));
}

TEST(EmitDataset, EmptyThrows) {
    test_util::TempDir dir("emit");
    std::vector<PreferencePair> empty;
    EXPECT_THROW(emit_dataset(empty, dir.path() / "x.jsonl"), std::invalid_argument);
}

TEST(EmitDataset, KeyOrderIsFixed) {
    auto j = pair_to_json(normal_pairs(1)[0]);
    std::string line = j.dump();
    size_t id_pos = line.find("\"id\"");
    size_t iter_pos = line.find("\"iteration\"");
    size_t prompt_pos = line.find("\"prompt\"");
    size_t chosen_pos = line.find("\"chosen\"");
    size_t rejected_pos = line.find("\"rejected\"");
    size_t meta_pos = line.find("\"meta\"");
    EXPECT_LT(id_pos, iter_pos);
    EXPECT_LT(iter_pos, prompt_pos);
    EXPECT_LT(prompt_pos, chosen_pos);
    EXPECT_LT(chosen_pos, rejected_pos);
    EXPECT_LT(rejected_pos, meta_pos);
}
