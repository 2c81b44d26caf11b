#pragma once

// Deterministic mock backends for desk-scale closed-loop testing.
//
// The mock generator embeds its latent state in the text it emits: each
// response starts with "quality=<q> strategy=<s>" followed by filler padded
// to a sampled target length. The mock judge recovers the quality token from
// the response it is shown (and only the response, so thoughts can never
// leak into scores) and scores it
//
//     score = quality + length_bias * response_chars
//
// making judge length-bias an explicit, testable quantity. Every sample is
// drawn from an RNG stream keyed by (seed, instruction id, slot, attempt),
// so outputs are identical for any worker count or completion order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "prefgen/backends.hpp"
#include "prefgen/errors.hpp"
#include "prefgen/prompting.hpp"
#include "prefgen/rng.hpp"

namespace prefgen {

struct MockWorldConfig {
    uint64_t rng_seed = 7;
    std::vector<double> strategy_qualities = {0.2, 0.4, 0.6, 0.8};
    double length_bias = 0.01; // beta in the mock judge
    std::vector<double> parse_fail_prob = {0.05}; // per strategy; size 1 broadcasts
    double quality_noise_sd = 0.1;
    int response_len_min = 120;
    int response_len_max = 160;
    int latency_ms = 0; // artificial per-call latency, for concurrency tests
};

inline void validate_mock_config(const MockWorldConfig& cfg) {
    if (cfg.strategy_qualities.empty()) throw ConfigError("mock world needs at least one strategy");
    if (cfg.parse_fail_prob.size() != 1 &&
        cfg.parse_fail_prob.size() != cfg.strategy_qualities.size()) {
        throw ConfigError("parse_fail_prob must have one entry or one per strategy");
    }
    for (double p : cfg.parse_fail_prob) {
        if (p < 0.0 || p > 1.0) throw ConfigError("parse_fail_prob entries must be in [0, 1]");
    }
    if (cfg.response_len_min < 1 || cfg.response_len_max < cfg.response_len_min) {
        throw ConfigError("invalid mock response length range");
    }
}

struct MockStats {
    std::atomic<uint64_t> generate_calls{0};
    std::atomic<uint64_t> pointwise_calls{0};
    std::atomic<uint64_t> pairwise_calls{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> max_in_flight_seen{0};
};

class MockWorld {
public:
    explicit MockWorld(MockWorldConfig cfg) : cfg_(std::move(cfg)) { validate_mock_config(cfg_); }

    const MockWorldConfig& config() const { return cfg_; }
    MockStats& stats() { return stats_; }

    size_t strategy_count() const { return cfg_.strategy_qualities.size(); }

    double parse_fail_prob(size_t strategy) const {
        return cfg_.parse_fail_prob.size() == 1 ? cfg_.parse_fail_prob[0]
                                                : cfg_.parse_fail_prob[strategy];
    }

    size_t sample_strategy(const std::vector<double>& weights, Rng& rng) const {
        double u = rng.next_u01();
        double acc = 0.0;
        for (size_t s = 0; s < weights.size(); ++s) {
            acc += weights[s];
            if (u < acc) return s;
        }
        return weights.size() - 1;
    }

    // Raw model output for one slot; deterministic in (seed, id, slot, attempt).
    std::string generate_raw(const ThoughtPrompt& prompt, const std::vector<double>& policy,
                             const std::string& instruction_id, int slot, int attempt) const {
        stats_.generate_calls.fetch_add(1);
        Rng rng = RngKey(cfg_.rng_seed)
                      .with("gen")
                      .with(instruction_id)
                      .with(slot)
                      .with(attempt)
                      .rng();
        size_t strategy = sample_strategy(policy, rng);
        double quality = cfg_.strategy_qualities[strategy] + cfg_.quality_noise_sd * rng.next_normal();
        int64_t target_len = rng.next_int(cfg_.response_len_min, cfg_.response_len_max);
        bool fail = rng.next_u01() < parse_fail_prob(strategy);
        bool fail_with_marker = rng.next_u01() < 0.3;

        std::string thought = "strategy=" + std::to_string(strategy) +
                              " outline: read the request, pick an angle, draft the answer.";
        std::string head;
        if (!prompt.thought_marker.empty()) head = prompt.thought_marker + "\n";
        head += thought;

        if (fail && !fail_with_marker) {
            // Missing-marker failure: keeps rambling, never emits the marker.
            return head + "\n... the draft keeps going and never settles on a final answer.";
        }
        if (fail && fail_with_marker) {
            // Marker present but response empty.
            return head + "\n" + prompt.response_marker + "\n   ";
        }

        char quality_buf[32];
        std::snprintf(quality_buf, sizeof(quality_buf), "%.6f", quality);
        std::string body = "quality=" + std::string(quality_buf) +
                           " strategy=" + std::to_string(strategy) + " ";
        static constexpr std::string_view filler = "the quick brown fox jumps over the lazy dog ";
        while (static_cast<int64_t>(body.size()) < target_len) {
            body += filler.substr(0, std::min<size_t>(filler.size(),
                                                      static_cast<size_t>(target_len) - body.size()));
        }
        if (body.back() == ' ') body.back() = '.';
        return head + "\n" + prompt.response_marker + "\n" + body;
    }

    // Judge view: quality token parsed back out of the response text.
    double latent_quality(const std::string& response) const {
        size_t pos = response.find("quality=");
        if (pos == std::string::npos) return 0.0;
        return std::strtod(response.c_str() + pos + 8, nullptr);
    }

    double judge_score(const std::string& response) const {
        return latent_quality(response) +
               cfg_.length_bias * static_cast<double>(utf8_length(response));
    }

    // Strategy token from any part of a raw output (used by the loop
    // simulator's policy update; absent in degenerate texts -> -1).
    static int strategy_of(const std::string& text) {
        size_t pos = text.find("strategy=");
        if (pos == std::string::npos) return -1;
        return std::atoi(text.c_str() + pos + 9);
    }

    double expected_quality(const std::vector<double>& policy) const {
        double e = 0.0;
        for (size_t s = 0; s < policy.size() && s < cfg_.strategy_qualities.size(); ++s) {
            e += policy[s] * cfg_.strategy_qualities[s];
        }
        return e;
    }

    void track_in_flight_enter() const {
        int now = stats_.in_flight.fetch_add(1) + 1;
        int seen = stats_.max_in_flight_seen.load();
        while (now > seen && !stats_.max_in_flight_seen.compare_exchange_weak(seen, now)) {
        }
        if (cfg_.latency_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.latency_ms));
        }
    }
    void track_in_flight_exit() const { stats_.in_flight.fetch_sub(1); }

private:
    MockWorldConfig cfg_;
    mutable MockStats stats_;
};

inline std::vector<double> uniform_policy(size_t strategies) {
    return std::vector<double>(strategies, 1.0 / static_cast<double>(strategies));
}

inline std::string policy_tag(const std::vector<double>& policy) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (double w : policy) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g,", w);
        h = fnv1a64(buf, h);
    }
    return to_hex(h);
}

class MockCompleter : public TextCompleter {
public:
    MockCompleter(std::shared_ptr<MockWorld> world, ThoughtPrompt prompt,
                  std::vector<double> policy)
        : world_(std::move(world)), prompt_(std::move(prompt)), policy_(std::move(policy)) {
        if (policy_.empty()) policy_ = uniform_policy(world_->strategy_count());
    }

    std::string identity() const override {
        return "mock:gen:" + std::to_string(world_->config().rng_seed) + ":" +
               std::string(prompt_kind_name(prompt_.kind)) + ":" + policy_tag(policy_);
    }

    std::optional<std::string> complete(const std::string&, const std::string& instruction_id,
                                        int candidate_index, int attempt) override {
        world_->track_in_flight_enter();
        stats_.attempted.fetch_add(1);
        std::string raw =
            world_->generate_raw(prompt_, policy_, instruction_id, candidate_index, attempt);
        stats_.succeeded.fetch_add(1);
        world_->track_in_flight_exit();
        return raw;
    }

private:
    std::shared_ptr<MockWorld> world_;
    ThoughtPrompt prompt_;
    std::vector<double> policy_;
};

class MockPointwiseScorer : public PointwiseScorer {
public:
    explicit MockPointwiseScorer(std::shared_ptr<MockWorld> world) : world_(std::move(world)) {}

    std::string identity() const override {
        return "mock:pointwise:" + std::to_string(world_->config().rng_seed);
    }

    std::optional<double> score(const std::string&, const std::string& response) override {
        world_->stats().pointwise_calls.fetch_add(1);
        stats_.attempted.fetch_add(1);
        stats_.succeeded.fetch_add(1);
        return world_->judge_score(response);
    }

private:
    std::shared_ptr<MockWorld> world_;
};

class MockPairwiseComparer : public PairwiseComparer {
public:
    enum class Bias { None, FirstAlwaysWins };

    MockPairwiseComparer(std::shared_ptr<MockWorld> world, Bias bias = Bias::None)
        : world_(std::move(world)), bias_(bias) {}

    std::string identity() const override {
        return std::string("mock:pairwise:") + (bias_ == Bias::FirstAlwaysWins ? "first:" : "") +
               std::to_string(world_->config().rng_seed);
    }

    PairOutcome compare(const std::string&, const std::string& response_a,
                        const std::string& response_b) override {
        world_->stats().pairwise_calls.fetch_add(1);
        stats_.attempted.fetch_add(1);
        stats_.succeeded.fetch_add(1);
        if (bias_ == Bias::FirstAlwaysWins) return PairOutcome::AWins;
        double sa = world_->judge_score(response_a);
        double sb = world_->judge_score(response_b);
        if (sa > sb) return PairOutcome::AWins;
        if (sb > sa) return PairOutcome::BWins;
        return PairOutcome::TieOrError;
    }

private:
    std::shared_ptr<MockWorld> world_;
    Bias bias_;
};

} // namespace prefgen
