#pragma once

// Pairwise judgments -> battle matrix -> per-candidate strength scores via
// regularized Bradley-Terry maximum likelihood.
//
// The battle matrix counts directed wins accumulated over both presentation
// orders of every pair, so a purely position-driven judge produces a
// symmetric matrix and all-zero scores. Strengths maximize
//
//     sum_{m,n} B[m][n] * log sigmoid(s_m - s_n)  -  (lambda/2) * ||s||^2
//
// The Gaussian prior keeps undefeated candidates finite and pins the gauge:
// the regularized maximizer has exactly zero mean. Solver: minorization-
// maximization sweeps (Hunter, "MM Algorithms for Generalized Bradley-Terry
// Models", Annals of Statistics 2004) extended with the prior term, then
// Newton refinement with backtracking. Gradient ascent is too slow as a
// finisher here: the prior makes the slow mode's curvature ~lambda, so
// reaching tol within max_iter needs second-order steps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefgen {

enum class PairOutcome { AWins, BWins, TieOrError };

inline std::string_view pair_outcome_name(PairOutcome o) {
    switch (o) {
        case PairOutcome::AWins: return "AWins";
        case PairOutcome::BWins: return "BWins";
        case PairOutcome::TieOrError: return "TieOrError";
    }
    return "unknown";
}

// One judged ordered pair: candidate m was presented first, n second.
struct Judgment {
    int m = 0;
    int n = 0;
    PairOutcome outcome = PairOutcome::TieOrError;
};

class BattleMatrix {
public:
    BattleMatrix() = default;
    explicit BattleMatrix(int k) : k_(k), counts_(static_cast<size_t>(k) * k, 0) {}

    int size() const { return k_; }
    int at(int m, int n) const { return counts_[static_cast<size_t>(m) * k_ + n]; }
    void add(int m, int n, int delta) { counts_[static_cast<size_t>(m) * k_ + n] += delta; }

    BattleMatrix transposed() const {
        BattleMatrix t(k_);
        for (int m = 0; m < k_; ++m)
            for (int n = 0; n < k_; ++n) t.add(n, m, at(m, n));
        return t;
    }

private:
    int k_ = 0;
    std::vector<int> counts_;
};

// b[m][n] = 1[judgment (m,n) preferred m] + 1[judgment (n,m) preferred m].
// Ties and judge errors contribute nothing. Each ordered pair may be judged
// at most once.
inline BattleMatrix build_battle_matrix(int k, const std::vector<Judgment>& judgments) {
    if (k < 0) throw std::invalid_argument("candidate count must be non-negative");
    BattleMatrix b(k);
    std::vector<char> seen(static_cast<size_t>(k) * k, 0);
    for (const Judgment& j : judgments) {
        if (j.m < 0 || j.m >= k || j.n < 0 || j.n >= k) {
            throw std::invalid_argument("judgment index out of range");
        }
        if (j.m == j.n) {
            throw std::invalid_argument("SelfBattle: candidate cannot battle itself");
        }
        char& mark = seen[static_cast<size_t>(j.m) * k + j.n];
        if (mark) {
            std::ostringstream msg;
            msg << "DuplicateJudgment: ordered pair (" << j.m << ", " << j.n << ") judged twice";
            throw std::invalid_argument(msg.str());
        }
        mark = 1;
        if (j.outcome == PairOutcome::AWins) b.add(j.m, j.n, 1);
        if (j.outcome == PairOutcome::BWins) b.add(j.n, j.m, 1);
    }
    return b;
}

struct EloOptions {
    double prior_strength = 0.01; // lambda
    double tol = 1e-8;            // on the gradient max-norm
    int max_iter = 1000;
};

struct EloScores {
    std::vector<double> scores; // mean-zero
    bool converged = false;
    int iterations_used = 0;
};

namespace detail {

inline double log_sigmoid(double x) {
    // log(e^x / (1 + e^x)) computed without overflow.
    return x > 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double elo_objective(const BattleMatrix& b, const std::vector<double>& s, double lambda) {
    const int k = b.size();
    double obj = 0.0;
    for (int m = 0; m < k; ++m) {
        for (int n = 0; n < k; ++n) {
            if (b.at(m, n) > 0) obj += b.at(m, n) * log_sigmoid(s[m] - s[n]);
        }
        obj -= 0.5 * lambda * s[m] * s[m];
    }
    return obj;
}

inline void elo_gradient(const BattleMatrix& b, const std::vector<double>& s, double lambda,
                         std::vector<double>& g) {
    const int k = b.size();
    g.assign(static_cast<size_t>(k), 0.0);
    for (int m = 0; m < k; ++m) {
        for (int n = 0; n < k; ++n) {
            if (m == n) continue;
            int bmn = b.at(m, n);
            int nn = bmn + b.at(n, m);
            if (nn == 0) continue;
            g[m] += bmn - nn * sigmoid(s[m] - s[n]);
        }
        g[m] -= lambda * s[m];
    }
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline void center(std::vector<double>& s) {
    double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    for (double& x : s) x -= mean;
}

// Solves the symmetric positive definite system A x = rhs in place
// (Gaussian elimination with partial pivoting; k is tiny).
inline std::vector<double> solve_spd(std::vector<std::vector<double>> a, std::vector<double> rhs) {
    const int k = static_cast<int>(rhs.size());
    for (int col = 0; col < k; ++col) {
        int pivot = col;
        for (int r = col + 1; r < k; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (int r = col + 1; r < k; ++r) {
            double f = a[r][col] / a[col][col];
            for (int c = col; c < k; ++c) a[r][c] -= f * a[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> x(static_cast<size_t>(k), 0.0);
    for (int r = k - 1; r >= 0; --r) {
        double acc = rhs[r];
        for (int c = r + 1; c < k; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return x;
}

} // namespace detail

inline EloScores solve_elo(const BattleMatrix& b, const EloOptions& opt = {}) {
    if (opt.prior_strength <= 0.0) throw std::invalid_argument("prior_strength must be > 0");
    if (opt.tol <= 0.0) throw std::invalid_argument("tol must be > 0");
    const int k = b.size();
    const double lambda = opt.prior_strength;

    EloScores result;
    result.scores.assign(static_cast<size_t>(k), 0.0);
    if (k == 0) {
        result.converged = true;
        return result;
    }

    std::vector<double>& s = result.scores;
    std::vector<double> wins(static_cast<size_t>(k), 0.0);
    for (int m = 0; m < k; ++m)
        for (int n = 0; n < k; ++n) wins[m] += b.at(m, n);

    std::vector<double> g;
    detail::elo_gradient(b, s, lambda, g);
    int iter = 0;

    // Phase 1: MM sweeps. Hunter's minorization makes the surrogate separable;
    // with the prior each coordinate solves W_i - c_i e^x - lambda x = 0
    // (strictly decreasing in x), by 1-D Newton. Jacobi-style updates keep the
    // iteration map permutation-equivariant.
    // MM is monotone and gets into the basin fast but crawls near the
    // optimum; hand over to Newton once the gradient is small.
    const int mm_iters = std::min(opt.max_iter, 50);
    std::vector<double> snew(static_cast<size_t>(k), 0.0);
    while (iter < mm_iters && detail::max_abs(g) > 1e-3) {
        ++iter;
        for (int i = 0; i < k; ++i) {
            double ci = 0.0;
            for (int j = 0; j < k; ++j) {
                if (j == i) continue;
                int nij = b.at(i, j) + b.at(j, i);
                if (nij > 0) ci += nij / (std::exp(s[i]) + std::exp(s[j]));
            }
            if (ci == 0.0) {
                snew[i] = 0.0; // isolated candidate: prior alone pins it at 0
                continue;
            }
            double x = s[i];
            for (int it = 0; it < 30; ++it) {
                double ex = std::exp(x);
                double f = wins[i] - ci * ex - lambda * x;
                double fp = -ci * ex - lambda;
                double step = f / fp;
                x -= step;
                if (std::abs(step) < 1e-14) break;
            }
            snew[i] = x;
        }
        s = snew;
        detail::center(s);
        detail::elo_gradient(b, s, lambda, g);
    }

    // Phase 2: Newton with Armijo backtracking on -H = L + lambda*I (L a
    // weighted graph Laplacian, so -H is positive definite). Two polish steps
    // after reaching tol push the gradient to ~machine precision, which the
    // exact symmetry properties (transpose negation, permutation
    // equivariance) rely on.
    int polish = 3;
    while (iter < opt.max_iter) {
        double gnorm = detail::max_abs(g);
        if (gnorm <= opt.tol) {
            if (polish == 0 || gnorm <= 1e-14) break;
            --polish;
        }
        ++iter;
        std::vector<std::vector<double>> neg_h(static_cast<size_t>(k),
                                               std::vector<double>(static_cast<size_t>(k), 0.0));
        for (int m = 0; m < k; ++m) {
            for (int n = 0; n < k; ++n) {
                if (m == n) continue;
                int nmn = b.at(m, n) + b.at(n, m);
                if (nmn == 0) continue;
                double sig = detail::sigmoid(s[m] - s[n]);
                double w = nmn * sig * (1.0 - sig);
                neg_h[m][m] += w;
                neg_h[m][n] -= w;
            }
            neg_h[m][m] += lambda;
        }
        std::vector<double> step = detail::solve_spd(neg_h, g);
        double f0 = detail::elo_objective(b, s, lambda);
        // slope = g^T (-H)^-1 g >= 0. Below rounding noise the line search
        // cannot see the improvement; the full (tiny) Newton step is correct.
        double slope = std::inner_product(g.begin(), g.end(), step.begin(), 0.0);
        double alpha = 1.0;
        std::vector<double> trial(static_cast<size_t>(k));
        if (slope > 1e-13 * std::max(1.0, std::abs(f0))) {
            for (int bt = 0; bt < 60; ++bt) {
                for (int i = 0; i < k; ++i) trial[i] = s[i] + alpha * step[i];
                if (detail::elo_objective(b, trial, lambda) >= f0 + 1e-4 * alpha * slope) break;
                alpha *= 0.5;
            }
        } else {
            for (int i = 0; i < k; ++i) trial[i] = s[i] + step[i];
        }
        s = trial;
        detail::center(s);
        detail::elo_gradient(b, s, lambda, g);
    }

    detail::center(s);
    result.converged = detail::max_abs(g) <= opt.tol;
    result.iterations_used = iter;
    return result;
}

// Round-robin protocol: every unordered pair judged in both presentation
// orders, one judgment per ordered pair (k*(k-1) judge calls).
template <typename JudgeFn>
std::vector<Judgment> round_robin_judgments(int k, JudgeFn&& judge) {
    std::vector<Judgment> out;
    out.reserve(static_cast<size_t>(k) * (k - 1));
    for (int m = 0; m < k; ++m) {
        for (int n = m + 1; n < k; ++n) {
            out.push_back({m, n, judge(m, n)});
            out.push_back({n, m, judge(n, m)});
        }
    }
    return out;
}

// Battle log rows for offline debugging: "instruction_id,m,n,outcome".
inline void append_battle_log_csv(std::string& csv, const std::string& instruction_id,
                                  const std::vector<Judgment>& judgments) {
    for (const Judgment& j : judgments) {
        csv += instruction_id;
        csv += ',';
        csv += std::to_string(j.m);
        csv += ',';
        csv += std::to_string(j.n);
        csv += ',';
        csv += pair_outcome_name(j.outcome);
        csv += '\n';
    }
}

} // namespace prefgen
