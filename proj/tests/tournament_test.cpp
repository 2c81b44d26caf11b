#include "prefgen/tournament.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"

using namespace prefgen;

namespace {

BattleMatrix matrix_from(std::initializer_list<std::initializer_list<int>> rows) {
    BattleMatrix b(static_cast<int>(rows.size()));
    int m = 0;
    for (const auto& row : rows) {
        int n = 0;
        for (int v : row) {
            b.add(m, n, v);
            ++n;
        }
        ++m;
    }
    return b;
}

// Random matrix realizable under the both-orders protocol: per unordered
// pair, the two directed counts sum to at most 2.
BattleMatrix random_matrix(std::mt19937& rng, int k) {
    BattleMatrix b(k);
    std::uniform_int_distribution<int> total_dist(0, 2);
    std::uniform_int_distribution<int> split_dist(0, 1);
    for (int m = 0; m < k; ++m) {
        for (int n = m + 1; n < k; ++n) {
            int total = total_dist(rng);
            int to_m = 0;
            for (int t = 0; t < total; ++t) to_m += split_dist(rng);
            b.add(m, n, to_m);
            b.add(n, m, total - to_m);
        }
    }
    return b;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

TEST(BattleMatrix, BothOrdersSameWinner) {
    // Candidate 0 wins both presentations of the pair.
    auto b = build_battle_matrix(2, {{0, 1, PairOutcome::AWins}, {1, 0, PairOutcome::BWins}});
    EXPECT_EQ(b.at(0, 1), 2);
    EXPECT_EQ(b.at(1, 0), 0);
}

TEST(BattleMatrix, PositionBiasedJudgeGivesSymmetricMatrix) {
    auto b = build_battle_matrix(2, {{0, 1, PairOutcome::AWins}, {1, 0, PairOutcome::AWins}});
    EXPECT_EQ(b.at(0, 1), 1);
    EXPECT_EQ(b.at(1, 0), 1);
}

TEST(BattleMatrix, AllTiesGiveZeroMatrix) {
    auto b = build_battle_matrix(
        2, {{0, 1, PairOutcome::TieOrError}, {1, 0, PairOutcome::TieOrError}});
    EXPECT_EQ(b.at(0, 1), 0);
    EXPECT_EQ(b.at(1, 0), 0);
}

TEST(BattleMatrix, SelfBattleRejected) {
    EXPECT_THROW(build_battle_matrix(2, {{0, 0, PairOutcome::AWins}}), std::invalid_argument);
}

TEST(BattleMatrix, DuplicateJudgmentRejected) {
    EXPECT_THROW(
        build_battle_matrix(2, {{0, 1, PairOutcome::AWins}, {0, 1, PairOutcome::BWins}}),
        std::invalid_argument);
}

TEST(SolveElo, ZeroMatrixGivesZeros) {
    auto elo = solve_elo(BattleMatrix(4));
    EXPECT_TRUE(elo.converged);
    for (double s : elo.scores) EXPECT_EQ(s, 0.0);
}

TEST(SolveElo, SymmetricMatrixGivesZeros) {
    auto elo = solve_elo(matrix_from({{0, 1}, {1, 0}}));
    EXPECT_TRUE(elo.converged);
    EXPECT_NEAR(elo.scores[0], 0.0, 1e-12);
    EXPECT_NEAR(elo.scores[1], 0.0, 1e-12);
}

TEST(SolveElo, RockPaperScissorsGivesZeros) {
    auto elo = solve_elo(matrix_from({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}));
    EXPECT_TRUE(elo.converged);
    for (double s : elo.scores) EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(SolveElo, DoubleWinMatchesGridOracle) {
    auto b = matrix_from({{0, 2}, {0, 0}});
    EloOptions opt;
    opt.prior_strength = 0.01;
    auto elo = solve_elo(b, opt);
    EXPECT_TRUE(elo.converged);
    EXPECT_GT(elo.scores[0], 0.0);
    EXPECT_NEAR(elo.scores[0] + elo.scores[1], 0.0, 1e-12);
    auto ref = oracles::grid_solve_k2(b, opt.prior_strength);
    EXPECT_NEAR(elo.scores[0], ref[0], 1e-5);
    EXPECT_NEAR(elo.scores[1], ref[1], 1e-5);
}

TEST(SolveElo, GaugeIsExactlyCentered) {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        auto b = random_matrix(rng, 2 + trial % 2);
        auto elo = solve_elo(b);
        EXPECT_NEAR(mean(elo.scores), 0.0, 1e-12);
    }
}

TEST(SolveElo, TransposeNegatesScores) {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        auto b = random_matrix(rng, 3);
        auto fwd = solve_elo(b);
        auto rev = solve_elo(b.transposed());
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(fwd.scores[i], -rev.scores[i], 1e-9);
    }
}

TEST(SolveElo, PermutationEquivariance) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        auto b = random_matrix(rng, 3);
        std::vector<int> perm = {0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), rng);
        BattleMatrix pb(3);
        for (int m = 0; m < 3; ++m)
            for (int n = 0; n < 3; ++n) pb.add(perm[m], perm[n], b.at(m, n));
        auto base = solve_elo(b);
        auto permuted = solve_elo(pb);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(base.scores[i], permuted.scores[perm[i]], 1e-9);
    }
}

TEST(SolveElo, UndefeatedCandidateIsStrictMax) {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        int k = 3 + static_cast<int>(rng() % 4);
        auto b = random_matrix(rng, k);
        int hero = static_cast<int>(rng() % static_cast<size_t>(k));
        BattleMatrix shaped(k);
        bool hero_has_win = false;
        for (int m = 0; m < k; ++m) {
            for (int n = 0; n < k; ++n) {
                if (n == hero) continue; // hero never loses
                shaped.add(m, n, b.at(m, n));
                if (m == hero && b.at(m, n) > 0) hero_has_win = true;
            }
        }
        if (!hero_has_win) shaped.add(hero, (hero + 1) % k, 1);
        // Give everyone else at least one loss so the max is unique.
        for (int n = 0; n < k; ++n) {
            if (n != hero && shaped.at(hero, n) == 0) shaped.add(hero, n, 1);
        }
        auto elo = solve_elo(shaped);
        for (int i = 0; i < k; ++i) {
            if (i != hero) EXPECT_GT(elo.scores[hero], elo.scores[i]);
        }
    }
}

TEST(SolveElo, MatchesGridOracleOnRandomMatrices) {
    std::mt19937 rng(31337);
    for (int trial = 0; trial < 25; ++trial) {
        int k = 2 + trial % 2;
        auto b = random_matrix(rng, k);
        auto elo = solve_elo(b);
        ASSERT_TRUE(elo.converged);
        auto ref = oracles::grid_solve(b, EloOptions{}.prior_strength);
        for (int i = 0; i < k; ++i) EXPECT_NEAR(elo.scores[i], ref[i], 1e-3);
    }
}

TEST(SolveElo, NonConvergenceIsReported) {
    EloOptions opt;
    opt.max_iter = 1;
    opt.tol = 1e-300; // unattainable
    auto elo = solve_elo(matrix_from({{0, 2}, {0, 0}}), opt);
    EXPECT_FALSE(elo.converged);
    EXPECT_EQ(elo.iterations_used, 1);
}

TEST(RoundRobin, JudgesBothOrdersOnce) {
    int calls = 0;
    auto judgments = round_robin_judgments(4, [&](int, int) {
        ++calls;
        return PairOutcome::AWins;
    });
    EXPECT_EQ(calls, 12); // k*(k-1)
    EXPECT_EQ(judgments.size(), 12u);
    EXPECT_NO_THROW(build_battle_matrix(4, judgments));
}

TEST(BattleLog, CsvRows) {
    std::string csv;
    append_battle_log_csv(csv, "q1", {{0, 1, PairOutcome::AWins}, {1, 0, PairOutcome::TieOrError}});
    EXPECT_EQ(csv, "q1,0,1,AWins\nq1,1,0,TieOrError\n");
}
