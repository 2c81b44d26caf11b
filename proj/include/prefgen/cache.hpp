#pragma once

// On-disk key-value cache for generations and judgments. One file per key
// (write-temp-then-rename, so a crash never leaves a torn entry); the full
// key is stored inside the file and verified on read, with linear probing
// on the rare 64-bit filename collision. Re-running an interrupted
// iteration replays cache hits instead of re-issuing backend calls.

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "prefgen/backends.hpp"
#include "prefgen/errors.hpp"
#include "prefgen/hash.hpp"
#include "prefgen/tournament.hpp"

namespace prefgen {

class CacheStore {
public:
    CacheStore() = default; // disabled
    explicit CacheStore(std::filesystem::path dir) : dir_(std::move(dir)), enabled_(true) {
        std::filesystem::create_directories(dir_);
    }

    bool enabled() const { return enabled_; }

    std::optional<nlohmann::json> get(const std::string& key) const {
        if (!enabled_) return std::nullopt;
        std::lock_guard<std::mutex> lock(mu_);
        for (int probe = 0;; ++probe) {
            auto path = entry_path(key, probe);
            std::ifstream in(path);
            if (!in) return std::nullopt;
            nlohmann::json entry;
            try {
                in >> entry;
            } catch (const nlohmann::json::exception&) {
                return std::nullopt; // torn entry: treat as miss, will be rewritten
            }
            if (entry.value("key", std::string()) == key) return entry.at("value");
        }
    }

    void put(const std::string& key, const nlohmann::json& value) const {
        if (!enabled_) return;
        std::lock_guard<std::mutex> lock(mu_);
        int probe = 0;
        for (;; ++probe) {
            auto path = entry_path(key, probe);
            std::ifstream in(path);
            if (!in) break;
            nlohmann::json entry;
            try {
                in >> entry;
            } catch (const nlohmann::json::exception&) {
                break;
            }
            if (entry.value("key", std::string()) == key) return; // already stored
        }
        auto path = entry_path(key, probe);
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw IoError("cannot write cache entry: " + tmp.string());
            nlohmann::json entry;
            entry["key"] = key;
            entry["value"] = value;
            out << entry.dump();
        }
        std::filesystem::rename(tmp, path);
    }

private:
    std::filesystem::path entry_path(const std::string& key, int probe) const {
        std::string name = to_hex(fnv1a64(key));
        if (probe > 0) name += "-" + std::to_string(probe);
        return dir_ / (name + ".json");
    }

    std::filesystem::path dir_;
    bool enabled_ = false;
    mutable std::mutex mu_;
};

// Cache keys follow the content the result depends on: generations on
// (backend identity, prompt, slot, attempt); judgments on
// (judge identity, instruction, response(s)).

inline std::string generation_cache_key(const std::string& backend_identity,
                                        const std::string& prompt, int candidate_index,
                                        int attempt) {
    return "gen|" + backend_identity + "|" + to_hex(fnv1a64(prompt)) + "|" +
           std::to_string(candidate_index) + "|" + std::to_string(attempt);
}

inline std::string pointwise_cache_key(const std::string& judge_identity,
                                       const std::string& instruction,
                                       const std::string& response) {
    return "ptw|" + judge_identity + "|" + to_hex(fnv1a64(instruction)) + "|" +
           to_hex(fnv1a64(response));
}

inline std::string pairwise_cache_key(const std::string& judge_identity,
                                      const std::string& instruction, const std::string& a,
                                      const std::string& b) {
    return "pw|" + judge_identity + "|" + to_hex(fnv1a64(instruction)) + "|" + to_hex(fnv1a64(a)) +
           "|" + to_hex(fnv1a64(b));
}

class CachingCompleter : public TextCompleter {
public:
    CachingCompleter(TextCompleter& inner, const CacheStore& cache)
        : inner_(inner), cache_(cache) {}

    std::string identity() const override { return inner_.identity(); }
    BackendStats& stats() override { return inner_.stats(); }

    std::optional<std::string> complete(const std::string& prompt,
                                        const std::string& instruction_id, int candidate_index,
                                        int attempt) override {
        std::string key = generation_cache_key(inner_.identity(), prompt, candidate_index, attempt);
        if (auto hit = cache_.get(key)) return hit->get<std::string>();
        auto result = inner_.complete(prompt, instruction_id, candidate_index, attempt);
        // Failures are not cached: a resumed run retries them.
        if (result) cache_.put(key, *result);
        return result;
    }

private:
    TextCompleter& inner_;
    const CacheStore& cache_;
};

class CachingPointwiseScorer : public PointwiseScorer {
public:
    CachingPointwiseScorer(PointwiseScorer& inner, const CacheStore& cache)
        : inner_(inner), cache_(cache) {}

    std::string identity() const override { return inner_.identity(); }
    BackendStats& stats() override { return inner_.stats(); }

    std::optional<double> score(const std::string& instruction, const std::string& response) override {
        std::string key = pointwise_cache_key(inner_.identity(), instruction, response);
        if (auto hit = cache_.get(key)) return hit->get<double>();
        auto result = inner_.score(instruction, response);
        if (result) cache_.put(key, *result);
        return result;
    }

private:
    PointwiseScorer& inner_;
    const CacheStore& cache_;
};

class CachingPairwiseComparer : public PairwiseComparer {
public:
    CachingPairwiseComparer(PairwiseComparer& inner, const CacheStore& cache)
        : inner_(inner), cache_(cache) {}

    std::string identity() const override { return inner_.identity(); }
    BackendStats& stats() override { return inner_.stats(); }

    PairOutcome compare(const std::string& instruction, const std::string& a,
                        const std::string& b) override {
        std::string key = pairwise_cache_key(inner_.identity(), instruction, a, b);
        if (auto hit = cache_.get(key)) {
            std::string name = hit->get<std::string>();
            if (name == "AWins") return PairOutcome::AWins;
            if (name == "BWins") return PairOutcome::BWins;
            return PairOutcome::TieOrError;
        }
        PairOutcome result = inner_.compare(instruction, a, b);
        cache_.put(key, std::string(pair_outcome_name(result)));
        return result;
    }

private:
    PairwiseComparer& inner_;
    const CacheStore& cache_;
};

} // namespace prefgen
