#pragma once

// Generation and judge backends over a chat-completions wire protocol.
//
// Every request is one candidate slot (n=1) so failures and retries stay
// per-slot: a generation slot that exhausts its retries degrades to an empty
// candidate, a judge call degrades to TieOrError / unscorable. An iteration
// is never aborted by a single bad request. Results are keyed by
// (instruction_id, candidate_index), never by completion order.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "prefgen/errors.hpp"
#include "prefgen/prompting.hpp"
#include "prefgen/judge_prompts.hpp"
#include "prefgen/tournament.hpp"

namespace prefgen {

inline constexpr const char* kApiKeyEnvVar = "PREFGEN_API_KEY";
inline constexpr const char* kChatCompletionsPath = "/v1/chat/completions";

struct GenerationConfig {
    std::string endpoint = "mock:"; // http(s) URL or mock: scheme
    std::string model;
    double temperature = 0.8;
    double top_p = 0.95;
    int max_in_flight = 4;
    std::optional<uint64_t> seed; // mock only
    int retries = 3;
    int timeout_ms = 30000;
    int backoff_base_ms = 100;
};

inline void validate_generation_config(const GenerationConfig& cfg) {
    if (cfg.temperature <= 0.0) throw ConfigError("temperature must be > 0");
    if (cfg.top_p <= 0.0 || cfg.top_p > 1.0) throw ConfigError("top_p must be in (0, 1]");
    if (cfg.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (cfg.retries < 1) throw ConfigError("retries must be >= 1");
}

struct BackendStats {
    std::atomic<uint64_t> attempted{0};
    std::atomic<uint64_t> succeeded{0};
};

class TextCompleter {
public:
    virtual ~TextCompleter() = default;
    // Stable identity for cache keys (endpoint + model + sampling params).
    virtual std::string identity() const = 0;
    // One candidate slot. attempt > 0 marks a resample after a parse error.
    // nullopt = request failed after bounded retries.
    virtual std::optional<std::string> complete(const std::string& prompt,
                                                const std::string& instruction_id,
                                                int candidate_index, int attempt) = 0;
    virtual BackendStats& stats() { return stats_; }

protected:
    BackendStats stats_;
};

class PointwiseScorer {
public:
    virtual ~PointwiseScorer() = default;
    virtual std::string identity() const = 0;
    // Finite score, or nullopt when the judge failed / replied non-numerically
    // (the candidate becomes unscorable).
    virtual std::optional<double> score(const std::string& instruction,
                                        const std::string& response) = 0;
    virtual BackendStats& stats() { return stats_; }

protected:
    BackendStats stats_;
};

class PairwiseComparer {
public:
    virtual ~PairwiseComparer() = default;
    virtual std::string identity() const = 0;
    // Judge failures and unparseable verdicts map to TieOrError.
    virtual PairOutcome compare(const std::string& instruction, const std::string& response_a,
                                const std::string& response_b) = 0;
    virtual BackendStats& stats() { return stats_; }

protected:
    BackendStats stats_;
};

// The judge only ever sees the response part; thoughts are never transmitted.
inline std::optional<double> judge_pointwise(PointwiseScorer& judge, const std::string& instruction,
                                             const std::string& response) {
    return judge.score(instruction, response);
}

inline PairOutcome judge_pair(PairwiseComparer& judge, const std::string& instruction,
                              const std::string& response_a, const std::string& response_b) {
    return judge.compare(instruction, response_a, response_b);
}

// Last [[A]] / [[B]] token in the judge's reply; judges often mention the
// labels while explaining, so the final verdict wins.
inline PairOutcome parse_binary_verdict(std::string_view reply) {
    size_t last_a = reply.rfind("[[A]]");
    size_t last_b = reply.rfind("[[B]]");
    if (last_a == std::string_view::npos && last_b == std::string_view::npos) {
        return PairOutcome::TieOrError;
    }
    if (last_a == std::string_view::npos) return PairOutcome::BWins;
    if (last_b == std::string_view::npos) return PairOutcome::AWins;
    return last_a > last_b ? PairOutcome::AWins : PairOutcome::BWins;
}

// Runs fn(0..n-1) on at most `workers` threads. The worker count is the
// in-flight bound: each worker holds at most one outstanding request.
template <typename Fn>
void bounded_parallel_for(size_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    size_t thread_count = std::min<size_t>(static_cast<size_t>(std::max(workers, 1)), n);
    if (thread_count <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (size_t t = 0; t < thread_count; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct SampleOptions {
    bool training = true; // training needs k >= 2 (pairs need distinct extremes)
};

// k raw generations for one rendered prompt, indexed by request slot.
// A failed slot yields nullopt.
inline std::vector<std::optional<std::string>> sample_candidates(TextCompleter& backend,
                                                                 const std::string& rendered_prompt,
                                                                 int k,
                                                                 const std::string& instruction_id,
                                                                 const SampleOptions& opts = {}) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (opts.training && k < 2) {
        throw std::invalid_argument("training mode needs k >= 2 (pairs need distinct extremes)");
    }
    std::vector<std::optional<std::string>> out(static_cast<size_t>(k));
    for (int slot = 0; slot < k; ++slot) {
        out[static_cast<size_t>(slot)] = backend.complete(rendered_prompt, instruction_id, slot, 0);
    }
    return out;
}

// Generation with per-slot parse-error resampling: a slot that parses badly
// is sampled again up to resample_attempts times before the failure stands.
inline std::vector<CandidateOutput> generate_parsed_candidates(TextCompleter& backend,
                                                               const ThoughtPrompt& prompt,
                                                               const std::string& rendered_prompt,
                                                               const std::string& instruction_id,
                                                               int k, int resample_attempts,
                                                               const SampleOptions& opts = {}) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (opts.training && k < 2) {
        throw std::invalid_argument("training mode needs k >= 2 (pairs need distinct extremes)");
    }
    std::vector<CandidateOutput> out;
    out.reserve(static_cast<size_t>(k));
    for (int slot = 0; slot < k; ++slot) {
        CandidateOutput candidate;
        for (int attempt = 0; attempt <= resample_attempts; ++attempt) {
            auto raw = backend.complete(rendered_prompt, instruction_id, slot, attempt);
            candidate = make_candidate(instruction_id, slot, raw.value_or(std::string()), prompt);
            if (candidate.parse.ok) break;
        }
        out.push_back(std::move(candidate));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chat-completions HTTP backends
// ---------------------------------------------------------------------------

namespace detail {

struct ChatMessage {
    std::string role;
    std::string content;
};

// POSTs one chat-completions request with bounded retries and exponential
// backoff; returns the first choice's message content.
inline std::optional<std::string> chat_completion(const std::string& endpoint,
                                                  const std::string& model,
                                                  const std::vector<ChatMessage>& messages,
                                                  double temperature, double top_p, int retries,
                                                  int timeout_ms, int backoff_base_ms,
                                                  BackendStats& stats) {
    nlohmann::json body;
    body["model"] = model;
    auto msgs = nlohmann::json::array();
    for (const ChatMessage& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(msgs);
    body["temperature"] = temperature;
    body["top_p"] = top_p;
    body["n"] = 1;
    const std::string payload = body.dump();

    for (int attempt = 0; attempt < retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_base_ms * (1 << (attempt - 1))));
        }
        stats.attempted.fetch_add(1);
        httplib::Client client(endpoint);
        client.set_connection_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (const char* key = std::getenv(kApiKeyEnvVar); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post(kChatCompletionsPath, headers, payload, "application/json");
        if (!res || res->status != 200) continue;
        try {
            auto reply = nlohmann::json::parse(res->body);
            std::string content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            stats.succeeded.fetch_add(1);
            return content;
        } catch (const nlohmann::json::exception&) {
            continue;
        }
    }
    return std::nullopt;
}

} // namespace detail

class HttpCompleter : public TextCompleter {
public:
    explicit HttpCompleter(GenerationConfig cfg) : cfg_(std::move(cfg)) {
        validate_generation_config(cfg_);
    }

    std::string identity() const override {
        return "http:" + cfg_.endpoint + ":" + cfg_.model + ":t" + std::to_string(cfg_.temperature) +
               ":p" + std::to_string(cfg_.top_p);
    }

    std::optional<std::string> complete(const std::string& prompt, const std::string&, int,
                                        int) override {
        return detail::chat_completion(cfg_.endpoint, cfg_.model, {{"user", prompt}},
                                       cfg_.temperature, cfg_.top_p, cfg_.retries, cfg_.timeout_ms,
                                       cfg_.backoff_base_ms, stats_);
    }

private:
    GenerationConfig cfg_;
};

struct JudgeHttpConfig {
    std::string endpoint;
    std::string model;
    int retries = 3;
    int timeout_ms = 30000;
    int backoff_base_ms = 100;
};

// Opaque scoring endpoint: the reply content must be a single number.
class HttpPointwiseScorer : public PointwiseScorer {
public:
    explicit HttpPointwiseScorer(JudgeHttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::string identity() const override { return "http:" + cfg_.endpoint + ":" + cfg_.model; }

    std::optional<double> score(const std::string& instruction, const std::string& response) override {
        std::string content = "[Instruction]\n" + instruction + "\n\n[Response]\n" + response;
        auto reply = detail::chat_completion(cfg_.endpoint, cfg_.model, {{"user", content}}, 0.0,
                                             1.0, cfg_.retries, cfg_.timeout_ms,
                                             cfg_.backoff_base_ms, stats_);
        if (!reply) return std::nullopt;
        std::string text = trim(*reply);
        char* end = nullptr;
        double value = std::strtod(text.c_str(), &end);
        if (end == text.c_str() || end != text.c_str() + text.size() || !std::isfinite(value)) {
            return std::nullopt; // MalformedScore
        }
        return value;
    }

private:
    JudgeHttpConfig cfg_;
};

class HttpPairwiseComparer : public PairwiseComparer {
public:
    explicit HttpPairwiseComparer(JudgeHttpConfig cfg) : cfg_(std::move(cfg)) {}

    std::string identity() const override { return "http:" + cfg_.endpoint + ":" + cfg_.model; }

    PairOutcome compare(const std::string& instruction, const std::string& response_a,
                        const std::string& response_b) override {
        std::string content = fill_pairwise_judge_prompt(kPairwiseJudgeTemplate, instruction,
                                                         response_a, response_b, "{input}");
        auto reply = detail::chat_completion(cfg_.endpoint, cfg_.model, {{"user", content}}, 0.0,
                                             1.0, cfg_.retries, cfg_.timeout_ms,
                                             cfg_.backoff_base_ms, stats_);
        if (!reply) return PairOutcome::TieOrError;
        return parse_binary_verdict(*reply);
    }

private:
    JudgeHttpConfig cfg_;
};

} // namespace prefgen
