#pragma once

// Pipeline configuration: JSON schema, validation, canonical serialization
// and the config hash recorded in manifests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefgen/backends.hpp"
#include "prefgen/errors.hpp"
#include "prefgen/hash.hpp"
#include "prefgen/mock.hpp"
#include "prefgen/prompting.hpp"
#include "prefgen/scoring.hpp"

namespace prefgen {

struct PromptConfig {
    PromptKind kind = PromptKind::Specific;
    std::string template_path; // required for kind = custom
};

struct JudgeConfig {
    std::string kind = "pointwise"; // pointwise | pairwise
    std::string endpoint = "mock:"; // URL, "mock:" or "mock:first-wins"
    std::string model;
    int retries = 3;
    int timeout_ms = 30000;
    int backoff_base_ms = 100;
};

struct LengthControlConfig {
    std::string mode = "sweep"; // fixed | sweep
    double rho = 0.0;           // used when fixed
    std::vector<double> grid = kDefaultRhoGrid;
};

struct PipelineConfig {
    PromptConfig prompt;
    int k = 8;
    GenerationConfig generation;
    JudgeConfig judge;
    LengthControlConfig length_control;
    double cap_ratio = 0.10;
    int per_iteration_count = 5000;
    int validation_count = 1500;
    uint64_t seed = 7;
    int resample_on_parse_error = 1;
    bool emit_battle_logs = false;
    bool cache_enabled = true;
    std::string out_dir = "out";
    double sim_learning_rate = 0.5;
    MockWorldConfig mock_world;
};

inline void validate_config(const PipelineConfig& cfg) {
    if (cfg.k < 2) throw ConfigError("k must be >= 2 (pairs need distinct extremes)");
    validate_generation_config(cfg.generation);
    if (cfg.judge.kind != "pointwise" && cfg.judge.kind != "pairwise") {
        throw ConfigError("judge.kind must be pointwise or pairwise");
    }
    if (cfg.length_control.mode != "fixed" && cfg.length_control.mode != "sweep") {
        throw ConfigError("length_control.mode must be fixed or sweep");
    }
    if (cfg.length_control.rho < 0.0) throw ConfigError("rho must be >= 0");
    if (cfg.length_control.grid.empty()) throw ConfigError("rho grid must be non-empty");
    for (size_t i = 0; i < cfg.length_control.grid.size(); ++i) {
        if (cfg.length_control.grid[i] < 0.0) throw ConfigError("rho grid values must be >= 0");
        if (i > 0 && cfg.length_control.grid[i] <= cfg.length_control.grid[i - 1]) {
            throw ConfigError("rho grid must be strictly ascending");
        }
    }
    if (cfg.cap_ratio < 0.0 || cfg.cap_ratio > 1.0) throw ConfigError("cap_ratio must be in [0, 1]");
    if (cfg.per_iteration_count < 1) throw ConfigError("per_iteration_count must be >= 1");
    if (cfg.validation_count < 0) throw ConfigError("validation_count must be >= 0");
    if (cfg.resample_on_parse_error < 0) throw ConfigError("resample_on_parse_error must be >= 0");
    if (cfg.prompt.kind == PromptKind::Custom && cfg.prompt.template_path.empty()) {
        throw ConfigError("custom prompt kind requires prompt.template_path");
    }
    if (cfg.sim_learning_rate < 0.0) throw ConfigError("sim_learning_rate must be >= 0");
    validate_mock_config(cfg.mock_world);
}

inline PromptKind prompt_kind_from_name(const std::string& name) {
    if (name == "generic") return PromptKind::Generic;
    if (name == "specific") return PromptKind::Specific;
    if (name == "custom") return PromptKind::Custom;
    throw ConfigError("unknown prompt kind: " + name);
}

inline ThoughtPrompt resolve_prompt(const PromptConfig& cfg) {
    switch (cfg.kind) {
        case PromptKind::Generic: return generic_thought_prompt();
        case PromptKind::Specific: return specific_thought_prompt();
        case PromptKind::Custom: return load_thought_prompt(cfg.template_path);
    }
    throw ConfigError("unknown prompt kind");
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    try {
        if (j.contains("prompt")) {
            const auto& p = j.at("prompt");
            std::string kind = "specific";
            detail::read_field(p, "kind", kind);
            cfg.prompt.kind = prompt_kind_from_name(kind);
            detail::read_field(p, "template_path", cfg.prompt.template_path);
        }
        detail::read_field(j, "k", cfg.k);
        detail::read_field(j, "seed", cfg.seed);
        if (j.contains("generation")) {
            const auto& g = j.at("generation");
            detail::read_field(g, "endpoint", cfg.generation.endpoint);
            detail::read_field(g, "model", cfg.generation.model);
            detail::read_field(g, "temperature", cfg.generation.temperature);
            detail::read_field(g, "top_p", cfg.generation.top_p);
            detail::read_field(g, "max_in_flight", cfg.generation.max_in_flight);
            detail::read_field(g, "retries", cfg.generation.retries);
            detail::read_field(g, "timeout_ms", cfg.generation.timeout_ms);
            detail::read_field(g, "backoff_base_ms", cfg.generation.backoff_base_ms);
            if (g.contains("seed")) cfg.generation.seed = g.at("seed").get<uint64_t>();
        }
        if (j.contains("judge")) {
            const auto& jj = j.at("judge");
            detail::read_field(jj, "kind", cfg.judge.kind);
            detail::read_field(jj, "endpoint", cfg.judge.endpoint);
            detail::read_field(jj, "model", cfg.judge.model);
            detail::read_field(jj, "retries", cfg.judge.retries);
            detail::read_field(jj, "timeout_ms", cfg.judge.timeout_ms);
            detail::read_field(jj, "backoff_base_ms", cfg.judge.backoff_base_ms);
        }
        if (j.contains("length_control")) {
            const auto& lc = j.at("length_control");
            detail::read_field(lc, "mode", cfg.length_control.mode);
            detail::read_field(lc, "rho", cfg.length_control.rho);
            detail::read_field(lc, "grid", cfg.length_control.grid);
        }
        detail::read_field(j, "cap_ratio", cfg.cap_ratio);
        detail::read_field(j, "per_iteration_count", cfg.per_iteration_count);
        detail::read_field(j, "validation_count", cfg.validation_count);
        detail::read_field(j, "resample_on_parse_error", cfg.resample_on_parse_error);
        detail::read_field(j, "emit_battle_logs", cfg.emit_battle_logs);
        detail::read_field(j, "cache_enabled", cfg.cache_enabled);
        detail::read_field(j, "out_dir", cfg.out_dir);
        detail::read_field(j, "sim_learning_rate", cfg.sim_learning_rate);
        if (j.contains("mock_world")) {
            const auto& m = j.at("mock_world");
            detail::read_field(m, "rng_seed", cfg.mock_world.rng_seed);
            detail::read_field(m, "strategy_qualities", cfg.mock_world.strategy_qualities);
            detail::read_field(m, "length_bias", cfg.mock_world.length_bias);
            detail::read_field(m, "parse_fail_prob", cfg.mock_world.parse_fail_prob);
            detail::read_field(m, "quality_noise_sd", cfg.mock_world.quality_noise_sd);
            detail::read_field(m, "response_len_min", cfg.mock_world.response_len_min);
            detail::read_field(m, "response_len_max", cfg.mock_world.response_len_max);
            detail::read_field(m, "latency_ms", cfg.mock_world.latency_ms);
        } else {
            cfg.mock_world.rng_seed = cfg.seed;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
    nlohmann::ordered_json j;
    j["prompt"] = {{"kind", std::string(prompt_kind_name(cfg.prompt.kind))},
                   {"template_path", cfg.prompt.template_path}};
    j["k"] = cfg.k;
    j["seed"] = cfg.seed;
    nlohmann::ordered_json gen;
    gen["endpoint"] = cfg.generation.endpoint;
    gen["model"] = cfg.generation.model;
    gen["temperature"] = cfg.generation.temperature;
    gen["top_p"] = cfg.generation.top_p;
    gen["max_in_flight"] = cfg.generation.max_in_flight;
    gen["retries"] = cfg.generation.retries;
    gen["timeout_ms"] = cfg.generation.timeout_ms;
    if (cfg.generation.seed) gen["seed"] = *cfg.generation.seed;
    j["generation"] = std::move(gen);
    j["judge"] = {{"kind", cfg.judge.kind}, {"endpoint", cfg.judge.endpoint}, {"model", cfg.judge.model}};
    j["length_control"] = {{"mode", cfg.length_control.mode},
                           {"rho", cfg.length_control.rho},
                           {"grid", cfg.length_control.grid}};
    j["cap_ratio"] = cfg.cap_ratio;
    j["per_iteration_count"] = cfg.per_iteration_count;
    j["validation_count"] = cfg.validation_count;
    j["resample_on_parse_error"] = cfg.resample_on_parse_error;
    j["emit_battle_logs"] = cfg.emit_battle_logs;
    j["cache_enabled"] = cfg.cache_enabled;
    j["out_dir"] = cfg.out_dir;
    j["sim_learning_rate"] = cfg.sim_learning_rate;
    j["mock_world"] = {{"rng_seed", cfg.mock_world.rng_seed},
                       {"strategy_qualities", cfg.mock_world.strategy_qualities},
                       {"length_bias", cfg.mock_world.length_bias},
                       {"parse_fail_prob", cfg.mock_world.parse_fail_prob},
                       {"quality_noise_sd", cfg.mock_world.quality_noise_sd},
                       {"response_len_min", cfg.mock_world.response_len_min},
                       {"response_len_max", cfg.mock_world.response_len_max}};
    return j;
}

inline std::string config_hash(const PipelineConfig& cfg) {
    return to_hex(fnv1a64(config_to_json(cfg).dump()));
}

} // namespace prefgen
