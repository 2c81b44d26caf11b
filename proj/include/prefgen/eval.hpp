#pragma once

// Fine-grained evaluation: category assignment, randomized-order pairwise
// judging, verdict scoring, and per-category win rates with thought-length
// statistics.
//
// Two judging styles: a graded judge returns one 5-way verdict per pair in
// one seeded-random presentation order; a binary judge evaluates both orders
// and each win counts half. Verdicts map to scores for side A as
// {1, 0.75, 0.5, 0.25, 0}; unparseable verdicts are excluded and counted,
// never imputed as ties (silent tie imputation would drag win rates toward
// 0.5 unreported).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefgen/backends.hpp"
#include "prefgen/judge_prompts.hpp"
#include "prefgen/mock.hpp"
#include "prefgen/prompting.hpp"
#include "prefgen/rng.hpp"

namespace prefgen {

enum class Verdict5 { AmuchBetter, ABetter, Tie, BBetter, BmuchBetter };

inline double verdict_score(Verdict5 v) {
    switch (v) {
        case Verdict5::AmuchBetter: return 1.0;
        case Verdict5::ABetter: return 0.75;
        case Verdict5::Tie: return 0.5;
        case Verdict5::BBetter: return 0.25;
        case Verdict5::BmuchBetter: return 0.0;
    }
    return 0.5;
}

inline Verdict5 mirror_verdict(Verdict5 v) {
    switch (v) {
        case Verdict5::AmuchBetter: return Verdict5::BmuchBetter;
        case Verdict5::ABetter: return Verdict5::BBetter;
        case Verdict5::Tie: return Verdict5::Tie;
        case Verdict5::BBetter: return Verdict5::ABetter;
        case Verdict5::BmuchBetter: return Verdict5::AmuchBetter;
    }
    return Verdict5::Tie;
}

// Last verdict tag wins: judges restate the labels while explaining.
inline std::optional<Verdict5> parse_graded_verdict(std::string_view reply) {
    struct Tag {
        std::string_view text;
        Verdict5 verdict;
    };
    static constexpr Tag tags[] = {
        {"[[A>>B]]", Verdict5::AmuchBetter}, {"[[A>B]]", Verdict5::ABetter},
        {"[[A=B]]", Verdict5::Tie},          {"[[B>A]]", Verdict5::BBetter},
        {"[[B>>A]]", Verdict5::BmuchBetter},
    };
    std::optional<Verdict5> best;
    size_t best_pos = 0;
    for (const Tag& tag : tags) {
        size_t pos = reply.rfind(tag.text);
        if (pos != std::string_view::npos && (!best || pos > best_pos)) {
            best = tag.verdict;
            best_pos = pos;
        }
    }
    return best;
}

inline std::optional<bool> try_parse_binary_verdict(std::string_view reply) {
    PairOutcome o = parse_binary_verdict(reply);
    if (o == PairOutcome::TieOrError) return std::nullopt;
    return o == PairOutcome::AWins;
}

// ---------------------------------------------------------------------------
// Category assignment
// ---------------------------------------------------------------------------

struct CategoryAssignment {
    std::string instruction_id;
    std::string category; // verbatim member of kCategoryNames
    std::string raw_judge_reply;
};

class CategoryJudge {
public:
    virtual ~CategoryJudge() = default;
    virtual std::string classify(const std::string& instruction) = 0;
};

inline std::string normalize_category_reply(std::string_view reply) {
    std::string folded(trim_view(reply));
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return folded;
}

inline std::string match_category(std::string_view reply) {
    std::string folded = normalize_category_reply(reply);
    for (std::string_view name : kCategoryNames) {
        if (folded == normalize_category_reply(name)) return std::string(name);
    }
    return "Miscellaneous";
}

inline CategoryAssignment assign_category(CategoryJudge& judge, const std::string& instruction_id,
                                          const std::string& instruction) {
    CategoryAssignment a;
    a.instruction_id = instruction_id;
    a.raw_judge_reply = judge.classify(instruction);
    a.category = match_category(a.raw_judge_reply);
    return a;
}

class MockCategoryJudge : public CategoryJudge {
public:
    explicit MockCategoryJudge(uint64_t seed = 0) : seed_(seed) {}
    std::string classify(const std::string& instruction) override {
        uint64_t h = RngKey(seed_).with("category").with(instruction).rng().next_u64();
        return std::string(kCategoryNames[h % kCategoryNames.size()]);
    }

private:
    uint64_t seed_;
};

class HttpCategoryJudge : public CategoryJudge {
public:
    explicit HttpCategoryJudge(JudgeHttpConfig cfg) : cfg_(std::move(cfg)) {}
    std::string classify(const std::string& instruction) override {
        std::string content = fill_placeholder(std::string(kAssignCategoryTemplate),
                                               kInstructionPlaceholder, instruction);
        auto reply = detail::chat_completion(cfg_.endpoint, cfg_.model, {{"user", content}}, 0.0,
                                             1.0, cfg_.retries, cfg_.timeout_ms,
                                             cfg_.backoff_base_ms, stats_);
        return reply.value_or(std::string());
    }

private:
    JudgeHttpConfig cfg_;
    BackendStats stats_;
};

// ---------------------------------------------------------------------------
// Pairwise evaluation
// ---------------------------------------------------------------------------

class PairwiseEvaluator {
public:
    virtual ~PairwiseEvaluator() = default;
    // 5-way verdict on the pair as presented. nullopt = malformed verdict.
    virtual std::optional<Verdict5> judge_graded(const std::string& instruction,
                                                 const std::string& first,
                                                 const std::string& second) = 0;
    // true = the first presented response is better. nullopt = malformed.
    virtual std::optional<bool> judge_binary(const std::string& instruction,
                                             const std::string& first,
                                             const std::string& second) = 0;
};

class MockEvaluator : public PairwiseEvaluator {
public:
    explicit MockEvaluator(std::shared_ptr<MockWorld> world, double big = 0.25, double small = 0.05)
        : world_(std::move(world)), big_(big), small_(small) {}

    std::optional<Verdict5> judge_graded(const std::string&, const std::string& first,
                                         const std::string& second) override {
        double diff = world_->judge_score(first) - world_->judge_score(second);
        if (diff > big_) return Verdict5::AmuchBetter;
        if (diff > small_) return Verdict5::ABetter;
        if (diff < -big_) return Verdict5::BmuchBetter;
        if (diff < -small_) return Verdict5::BBetter;
        return Verdict5::Tie;
    }

    std::optional<bool> judge_binary(const std::string&, const std::string& first,
                                     const std::string& second) override {
        double diff = world_->judge_score(first) - world_->judge_score(second);
        if (diff == 0.0) return std::nullopt; // binary judge has no tie verdict
        return diff > 0.0;
    }

private:
    std::shared_ptr<MockWorld> world_;
    double big_;
    double small_;
};

class HttpEvaluator : public PairwiseEvaluator {
public:
    explicit HttpEvaluator(JudgeHttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::optional<Verdict5> judge_graded(const std::string& instruction, const std::string& first,
                                         const std::string& second) override {
        std::string user = fill_pairwise_judge_prompt(kGradedJudgeUserTemplate, instruction, first,
                                                      second, "{prompt}");
        auto reply = detail::chat_completion(
            cfg_.endpoint, cfg_.model,
            {{"system", std::string(kGradedJudgeSystemTemplate)}, {"user", user}}, 0.0, 1.0,
            cfg_.retries, cfg_.timeout_ms, cfg_.backoff_base_ms, stats_);
        if (!reply) return std::nullopt;
        return parse_graded_verdict(*reply);
    }

    std::optional<bool> judge_binary(const std::string& instruction, const std::string& first,
                                     const std::string& second) override {
        std::string content = fill_pairwise_judge_prompt(kPairwiseJudgeTemplate, instruction, first,
                                                         second, "{input}");
        auto reply = detail::chat_completion(cfg_.endpoint, cfg_.model, {{"user", content}}, 0.0,
                                             1.0, cfg_.retries, cfg_.timeout_ms,
                                             cfg_.backoff_base_ms, stats_);
        if (!reply) return std::nullopt;
        return try_parse_binary_verdict(*reply);
    }

private:
    JudgeHttpConfig cfg_;
    BackendStats stats_;
};

enum class EvalStyle { GradedSingleOrder, GradedBothOrders, BinaryBothOrders };

struct EvalOutcome {
    bool valid = false;   // false = malformed verdict, excluded from aggregation
    double score_a = 0.5; // score for response A in [0, 1]
    bool swapped = false; // graded single-order: whether B was presented first
};

// Graded single-order: one seeded-random presentation order, verdict mapped
// back to a score for A. Graded both-orders: two verdicts averaged after
// unmapping the second. Binary: both orders judged, score = wins / 2.
inline EvalOutcome evaluate_pairwise(PairwiseEvaluator& judge, const std::string& instruction_id,
                                     const std::string& instruction, const std::string& response_a,
                                     const std::string& response_b, EvalStyle style,
                                     uint64_t order_seed) {
    EvalOutcome out;
    if (response_a.empty() || response_b.empty()) {
        throw std::invalid_argument("evaluate_pairwise needs non-empty responses");
    }
    if (style == EvalStyle::GradedSingleOrder) {
        out.swapped = (RngKey(order_seed).with("order").with(instruction_id).rng().next_u64() & 1) != 0;
        const std::string& first = out.swapped ? response_b : response_a;
        const std::string& second = out.swapped ? response_a : response_b;
        auto verdict = judge.judge_graded(instruction, first, second);
        if (!verdict) return out;
        double score_first = verdict_score(*verdict);
        out.score_a = out.swapped ? 1.0 - score_first : score_first;
        out.valid = true;
        return out;
    }
    if (style == EvalStyle::GradedBothOrders) {
        auto forward = judge.judge_graded(instruction, response_a, response_b);
        auto reverse = judge.judge_graded(instruction, response_b, response_a);
        if (!forward || !reverse) return out;
        out.score_a = (verdict_score(*forward) + (1.0 - verdict_score(*reverse))) / 2.0;
        out.valid = true;
        return out;
    }
    auto first_order = judge.judge_binary(instruction, response_a, response_b);
    auto second_order = judge.judge_binary(instruction, response_b, response_a);
    if (!first_order || !second_order) return out;
    int wins = (*first_order ? 1 : 0) + (*second_order ? 0 : 1);
    out.score_a = wins / 2.0;
    out.valid = true;
    return out;
}

// ---------------------------------------------------------------------------
// Per-category aggregation
// ---------------------------------------------------------------------------

struct EvalScore {
    std::string instruction_id;
    double score = 0.5;
};

struct CategoryStats {
    std::string category;
    double win_rate = 0.0;
    int n = 0;
    double mean_thought_len = 0.0;
    int thought_len_n = 0;
    bool low_sample = false;
};

struct CategoryReport {
    std::vector<CategoryStats> rows; // non-empty categories, fixed list order
    int scored = 0;
    int malformed_excluded = 0;
    int min_n = 10;
};

inline CategoryReport category_report(const std::vector<CategoryAssignment>& assignments,
                                      const std::vector<EvalScore>& scores,
                                      const std::unordered_map<std::string, double>& thought_lengths,
                                      int min_n = 10) {
    std::unordered_map<std::string, const CategoryAssignment*> by_id;
    for (const CategoryAssignment& a : assignments) by_id[a.instruction_id] = &a;

    struct Acc {
        double score_sum = 0.0;
        int n = 0;
        double len_sum = 0.0;
        int len_n = 0;
    };
    std::map<std::string, Acc> acc;
    for (const EvalScore& s : scores) {
        auto it = by_id.find(s.instruction_id);
        if (it == by_id.end()) {
            throw std::invalid_argument("scored instruction has no category assignment: " +
                                        s.instruction_id);
        }
        Acc& a = acc[it->second->category];
        a.score_sum += s.score;
        a.n += 1;
        auto len = thought_lengths.find(s.instruction_id);
        if (len != thought_lengths.end() && std::isfinite(len->second)) {
            a.len_sum += len->second;
            a.len_n += 1;
        }
    }

    CategoryReport report;
    report.min_n = min_n;
    for (std::string_view name : kCategoryNames) {
        auto it = acc.find(std::string(name));
        if (it == acc.end() || it->second.n == 0) continue; // empty category omitted
        CategoryStats row;
        row.category = std::string(name);
        row.n = it->second.n;
        row.win_rate = it->second.score_sum / it->second.n;
        row.thought_len_n = it->second.len_n;
        row.mean_thought_len = it->second.len_n > 0 ? it->second.len_sum / it->second.len_n : 0.0;
        row.low_sample = row.n < min_n;
        report.rows.push_back(std::move(row));
        report.scored += it->second.n;
    }
    return report;
}

inline nlohmann::ordered_json category_report_json(const CategoryReport& report) {
    nlohmann::ordered_json j;
    j["scored"] = report.scored;
    j["malformed_excluded"] = report.malformed_excluded;
    j["min_n"] = report.min_n;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const CategoryStats& row : report.rows) {
        rows.push_back({{"category", row.category},
                        {"win_rate", row.win_rate},
                        {"n", row.n},
                        {"mean_thought_len", row.mean_thought_len},
                        {"low_sample", row.low_sample}});
    }
    j["categories"] = std::move(rows);
    return j;
}

inline std::string category_report_table(const CategoryReport& report) {
    std::ostringstream out;
    size_t width = 8;
    for (const CategoryStats& row : report.rows) width = std::max(width, row.category.size());
    out << std::left;
    out.width(static_cast<std::streamsize>(width));
    out << "category";
    out << "  win_rate      n  mean_thought_len  flags\n";
    char buf[96];
    for (const CategoryStats& row : report.rows) {
        out.width(static_cast<std::streamsize>(width));
        out << row.category;
        std::snprintf(buf, sizeof(buf), "  %8.4f  %5d  %16.1f  %s\n", row.win_rate, row.n,
                      row.mean_thought_len, row.low_sample ? "low-sample" : "");
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "scored=%d malformed_excluded=%d min_n=%d\n", report.scored,
                  report.malformed_excluded, report.min_n);
    out << buf;
    return out.str();
}

} // namespace prefgen
