#pragma once

// Score normalization, length-control adjustment, and rho selection.
//
// adjusted = N(raw) - rho * N(length), where N subtracts the mean and
// divides by the population standard deviation over the K candidates of one
// instruction. Normalizing both terms puts score and length on one scale;
// rho then trades quality against verbosity. rho is tuned per batch: the
// smallest grid value for which the mean chosen length does not exceed the
// mean rejected length.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace prefgen {

inline constexpr double kDegenerateStd = 1e-9;

inline const std::vector<double> kDefaultRhoGrid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

// Mean 0, population std 1. A vector with std below kDegenerateStd maps to
// all zeros.
inline std::vector<double> normalize(const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("normalize needs at least 2 values");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / n);
    std::vector<double> out(values.size(), 0.0);
    if (sd < kDegenerateStd) return out;
    for (size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
    return out;
}

inline std::vector<double> apply_length_control(const std::vector<double>& raw,
                                                const std::vector<int64_t>& lengths,
                                                double rho) {
    if (raw.size() != lengths.size()) throw std::invalid_argument("raw/lengths size mismatch");
    if (rho < 0.0) throw std::invalid_argument("rho must be >= 0");
    std::vector<double> nraw = normalize(raw);
    std::vector<double> nlen(lengths.size());
    for (size_t i = 0; i < lengths.size(); ++i) nlen[i] = static_cast<double>(lengths[i]);
    nlen = normalize(nlen);
    for (size_t i = 0; i < nraw.size(); ++i) nraw[i] -= rho * nlen[i];
    return nraw;
}

// Per-instruction scores before/after length control. Unscorable slots
// (parse errors, judge failures) carry NaN and are excluded from the
// normalization statistics.
struct ScoredSet {
    std::string instruction_id;
    std::vector<double> raw_scores; // NaN where unscorable
    std::vector<int64_t> lengths;   // response character counts
    std::vector<bool> unscorable;
    std::vector<double> adjusted_scores;
    double rho = 0.0;

    int scorable_count() const {
        int n = 0;
        for (bool u : unscorable)
            if (!u) ++n;
        return n;
    }
};

// Masked length control: statistics over scorable entries only; unscorable
// entries stay NaN. Fewer than 2 scorable entries leaves everything NaN.
inline void apply_length_control(ScoredSet& set, double rho) {
    const size_t k = set.raw_scores.size();
    if (set.lengths.size() != k || set.unscorable.size() != k) {
        throw std::invalid_argument("ScoredSet vectors must have equal length");
    }
    set.rho = rho;
    set.adjusted_scores.assign(k, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> raw, len;
    std::vector<size_t> idx;
    for (size_t i = 0; i < k; ++i) {
        if (set.unscorable[i] || !std::isfinite(set.raw_scores[i])) continue;
        raw.push_back(set.raw_scores[i]);
        len.push_back(static_cast<double>(set.lengths[i]));
        idx.push_back(i);
    }
    if (raw.size() < 2) return;
    std::vector<double> nraw = normalize(raw);
    std::vector<double> nlen = normalize(len);
    for (size_t j = 0; j < idx.size(); ++j) {
        set.adjusted_scores[idx[j]] = nraw[j] - rho * nlen[j];
    }
}

// argmax/argmin over finite entries, ties broken by lowest index. Returns
// nothing when fewer than 2 finite entries exist or the extremes tie (a
// zero-margin pair carries no signal).
struct PairSelection {
    int chosen = -1;
    int rejected = -1;
};

inline std::optional<PairSelection> select_extremes(const std::vector<double>& adjusted) {
    int best = -1, worst = -1;
    for (size_t i = 0; i < adjusted.size(); ++i) {
        if (!std::isfinite(adjusted[i])) continue;
        if (best < 0 || adjusted[i] > adjusted[best]) best = static_cast<int>(i);
        if (worst < 0 || adjusted[i] < adjusted[worst]) worst = static_cast<int>(i);
    }
    if (best < 0 || worst < 0 || best == worst) return std::nullopt;
    if (adjusted[best] == adjusted[worst]) return std::nullopt;
    return PairSelection{best, worst};
}

struct RhoGridPoint {
    double rho = 0.0;
    double mean_chosen_len = 0.0;
    double mean_rejected_len = 0.0;
    int pairs = 0;
};

struct RhoSelection {
    double rho = 0.0;
    bool satisfied = false; // mean chosen length <= mean rejected length at rho
    std::vector<RhoGridPoint> grid;
};

// Smallest grid value for which pairs formed at that rho have mean chosen
// length <= mean rejected length. Raw scores are reused across the sweep;
// normalization and selection are recomputed per grid point. If no grid
// value qualifies, returns the largest with satisfied = false.
inline RhoSelection select_rho(std::vector<ScoredSet>& sets, const std::vector<double>& grid) {
    if (sets.empty()) throw std::invalid_argument("EmptyInput: no scored sets");
    if (grid.empty()) throw std::invalid_argument("rho grid must be non-empty");
    for (size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] <= grid[i - 1]) throw std::invalid_argument("rho grid must be ascending");
    }
    RhoSelection sel;
    bool found = false;
    for (double rho : grid) {
        RhoGridPoint pt;
        pt.rho = rho;
        double chosen_len = 0.0, rejected_len = 0.0;
        for (ScoredSet& set : sets) {
            apply_length_control(set, rho);
            auto pair = select_extremes(set.adjusted_scores);
            if (!pair) continue;
            chosen_len += static_cast<double>(set.lengths[static_cast<size_t>(pair->chosen)]);
            rejected_len += static_cast<double>(set.lengths[static_cast<size_t>(pair->rejected)]);
            ++pt.pairs;
        }
        if (pt.pairs > 0) {
            pt.mean_chosen_len = chosen_len / pt.pairs;
            pt.mean_rejected_len = rejected_len / pt.pairs;
        }
        sel.grid.push_back(pt);
        if (!found && pt.pairs > 0 && pt.mean_chosen_len <= pt.mean_rejected_len) {
            sel.rho = rho;
            sel.satisfied = true;
            found = true;
        }
    }
    if (!found) {
        sel.rho = grid.back();
        sel.satisfied = false;
    }
    // Leave the sets adjusted at the selected rho.
    for (ScoredSet& set : sets) apply_length_control(set, sel.rho);
    return sel;
}

inline nlohmann::ordered_json scoring_report_json(const std::vector<ScoredSet>& sets,
                                                  const RhoSelection& sel) {
    nlohmann::ordered_json report;
    report["selected_rho"] = sel.rho;
    report["rho_satisfied"] = sel.satisfied;
    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    for (const RhoGridPoint& pt : sel.grid) {
        grid.push_back({{"rho", pt.rho},
                        {"mean_chosen_len", pt.mean_chosen_len},
                        {"mean_rejected_len", pt.mean_rejected_len},
                        {"pairs", pt.pairs}});
    }
    report["grid"] = std::move(grid);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const ScoredSet& set : sets) {
        nlohmann::ordered_json row;
        row["id"] = set.instruction_id;
        auto scores = [](const std::vector<double>& v) {
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (double x : v) {
                if (std::isfinite(x)) arr.push_back(x);
                else arr.push_back(nullptr);
            }
            return arr;
        };
        row["raw_scores"] = scores(set.raw_scores);
        row["adjusted_scores"] = scores(set.adjusted_scores);
        row["lengths"] = set.lengths;
        row["unscorable"] = set.unscorable;
        rows.push_back(std::move(row));
    }
    report["instructions"] = std::move(rows);
    return report;
}

} // namespace prefgen
