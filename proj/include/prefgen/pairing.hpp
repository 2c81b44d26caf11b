#pragma once

// Chosen/rejected preference pairs from adjusted scores, parse-error
// rejected injection under a ratio cap, and JSONL dataset emission.
//
// Pairs carry the FULL raw model output (thought + markers + response) on
// both sides: downstream preference trainers optimize thought and response
// jointly. The chosen side always parsed cleanly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefgen/errors.hpp"
#include "prefgen/prompting.hpp"
#include "prefgen/rng.hpp"
#include "prefgen/scoring.hpp"

namespace prefgen {

struct PairMeta {
    double chosen_score = 0.0;
    double rejected_score = std::numeric_limits<double>::quiet_NaN(); // NaN for parse-error rejects
    double rho = 0.0;
    std::string judge_kind;
    bool rejected_is_parse_error = false;
};

struct PreferencePair {
    std::string instruction_id;
    int iteration = 0;
    std::string prompt; // rendered thought prompt + instruction
    std::string chosen;
    std::string rejected;
    PairMeta meta;
};

struct PairContext {
    int iteration = 0;
    double rho = 0.0;
    std::string judge_kind;
};

// Highest and lowest adjusted scores become chosen and rejected; ties break
// toward the lowest candidate index. Returns nothing when no usable margin
// exists. Candidates that failed to parse or have no finite score never
// participate.
inline std::optional<PreferencePair> build_pair(const std::vector<CandidateOutput>& candidates,
                                                const std::vector<double>& adjusted_scores,
                                                const std::string& prompt,
                                                const PairContext& ctx) {
    if (candidates.size() != adjusted_scores.size()) {
        throw std::invalid_argument("candidates/scores size mismatch");
    }
    std::vector<double> usable(adjusted_scores.size(), std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].parse.ok) usable[i] = adjusted_scores[i];
    }
    auto sel = select_extremes(usable);
    if (!sel) return std::nullopt;

    PreferencePair pair;
    pair.instruction_id = candidates[static_cast<size_t>(sel->chosen)].instruction_id;
    pair.iteration = ctx.iteration;
    pair.prompt = prompt;
    pair.chosen = candidates[static_cast<size_t>(sel->chosen)].raw_text;
    pair.rejected = candidates[static_cast<size_t>(sel->rejected)].raw_text;
    pair.meta.chosen_score = usable[static_cast<size_t>(sel->chosen)];
    pair.meta.rejected_score = usable[static_cast<size_t>(sel->rejected)];
    pair.meta.rho = ctx.rho;
    pair.meta.judge_kind = ctx.judge_kind;
    pair.meta.rejected_is_parse_error = false;
    return pair;
}

// One instruction eligible for parse-error injection: it has a best cleanly
// parsed candidate and at least one candidate that failed to parse.
struct InjectionCandidate {
    std::string instruction_id;
    std::string prompt;
    std::string chosen_raw; // best Ok candidate's full output
    double chosen_score = 0.0;
    std::string rejected_raw; // a parse-error candidate's full output
};

// Appends parse-error rejected pairs, keeping their share of the final
// dataset at or below cap_ratio. Selection over the eligible pool is
// seeded-pseudorandom so replays are exact but early instructions carry no
// systematic advantage.
inline std::vector<PreferencePair> inject_parse_error_pairs(std::vector<PreferencePair> pairs,
                                                            const std::vector<InjectionCandidate>& pool,
                                                            double cap_ratio, uint64_t seed,
                                                            const PairContext& ctx) {
    if (cap_ratio < 0.0 || cap_ratio > 1.0) throw std::invalid_argument("cap_ratio must be in [0, 1]");
    if (pool.empty() || cap_ratio == 0.0) return pairs;

    const size_t normal = pairs.size();
    // Largest n with n <= cap_ratio * (normal + n).
    size_t limit;
    if (cap_ratio >= 1.0) {
        limit = pool.size();
    } else {
        limit = static_cast<size_t>(std::floor(cap_ratio * normal / (1.0 - cap_ratio) + 1e-9));
        while (limit > 0 &&
               static_cast<double>(limit) > cap_ratio * static_cast<double>(normal + limit) + 1e-12) {
            --limit;
        }
    }
    limit = std::min(limit, pool.size());
    if (limit == 0) return pairs;

    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = RngKey(seed).with("inject").with(ctx.iteration).rng();
    for (size_t i = order.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.next_int(0, static_cast<int64_t>(i)));
        std::swap(order[i], order[j]);
    }
    order.resize(limit);
    std::sort(order.begin(), order.end()); // emit in corpus order

    for (size_t idx : order) {
        const InjectionCandidate& c = pool[idx];
        PreferencePair pair;
        pair.instruction_id = c.instruction_id;
        pair.iteration = ctx.iteration;
        pair.prompt = c.prompt;
        pair.chosen = c.chosen_raw;
        pair.rejected = c.rejected_raw;
        pair.meta.chosen_score = c.chosen_score;
        pair.meta.rejected_score = std::numeric_limits<double>::quiet_NaN();
        pair.meta.rho = ctx.rho;
        pair.meta.judge_kind = ctx.judge_kind;
        pair.meta.rejected_is_parse_error = true;
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

inline nlohmann::ordered_json pair_to_json(const PreferencePair& pair) {
    nlohmann::ordered_json j;
    j["id"] = pair.instruction_id;
    j["iteration"] = pair.iteration;
    j["prompt"] = pair.prompt;
    j["chosen"] = pair.chosen;
    j["rejected"] = pair.rejected;
    nlohmann::ordered_json meta;
    meta["chosen_score"] = pair.meta.chosen_score;
    if (std::isfinite(pair.meta.rejected_score)) meta["rejected_score"] = pair.meta.rejected_score;
    else meta["rejected_score"] = nullptr;
    meta["rho"] = pair.meta.rho;
    meta["judge_kind"] = pair.meta.judge_kind;
    meta["rejected_is_parse_error"] = pair.meta.rejected_is_parse_error;
    j["meta"] = std::move(meta);
    return j;
}

inline PreferencePair pair_from_json(const nlohmann::json& j) {
    PreferencePair pair;
    pair.instruction_id = j.at("id").get<std::string>();
    pair.iteration = j.at("iteration").get<int>();
    pair.prompt = j.at("prompt").get<std::string>();
    pair.chosen = j.at("chosen").get<std::string>();
    pair.rejected = j.at("rejected").get<std::string>();
    const auto& meta = j.at("meta");
    pair.meta.chosen_score = meta.at("chosen_score").get<double>();
    pair.meta.rejected_score = meta.at("rejected_score").is_null()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : meta.at("rejected_score").get<double>();
    pair.meta.rho = meta.at("rho").get<double>();
    pair.meta.judge_kind = meta.at("judge_kind").get<std::string>();
    pair.meta.rejected_is_parse_error = meta.at("rejected_is_parse_error").get<bool>();
    return pair;
}

// One JSON object per line, fixed key order, UTF-8. Identical pairs produce
// byte-identical files.
inline void emit_dataset(const std::vector<PreferencePair>& pairs,
                         const std::filesystem::path& path) {
    if (pairs.empty()) throw std::invalid_argument("emit_dataset: no pairs to emit");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset file for writing: " + path.string());
    for (const PreferencePair& pair : pairs) {
        out << pair_to_json(pair).dump() << '\n';
    }
    if (!out) throw IoError("failed writing dataset file: " + path.string());
}

inline std::vector<PreferencePair> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path.string());
    std::vector<PreferencePair> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        pairs.push_back(pair_from_json(nlohmann::json::parse(line)));
    }
    return pairs;
}

} // namespace prefgen
