#pragma once

// Iteration driver: instruction partitioning, the generate -> parse ->
// judge -> length-control -> pair -> inject -> emit loop, the closed-loop
// mock simulation, and validation scoring.
//
// Freshness contract: iteration t consumes corpus slice
// [validation + t*count, validation + (t+1)*count), so no instruction is
// ever reused across iterations and the validation slice stays disjoint
// from all training data. Per-instruction failures are logged and skipped;
// a batch never dies because one instruction did.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefgen/backends.hpp"
#include "prefgen/cache.hpp"
#include "prefgen/config.hpp"
#include "prefgen/errors.hpp"
#include "prefgen/mock.hpp"
#include "prefgen/pairing.hpp"
#include "prefgen/prompting.hpp"
#include "prefgen/scoring.hpp"
#include "prefgen/tournament.hpp"

namespace prefgen {

struct Instruction {
    std::string id;
    std::string text;
};

// JSONL with {"id": ..., "text": ...} objects, or plain text with one
// instruction per line (ids become line-000001, ...).
inline std::vector<Instruction> load_instructions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open instructions file: " + path.string());
    std::vector<Instruction> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_view(line).empty()) continue;
        if (line.front() == '{') {
            try {
                auto j = nlohmann::json::parse(line);
                out.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
                continue;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("bad instruction line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        char id[16];
        std::snprintf(id, sizeof(id), "line-%06zu", lineno);
        out.push_back({id, line});
    }
    // Duplicate ids would silently defeat the fresh-data guarantee.
    std::set<std::string> ids;
    for (const Instruction& ins : out) {
        if (!ids.insert(ins.id).second) {
            throw ConfigError("duplicate instruction id in corpus: " + ins.id);
        }
    }
    return out;
}

struct SliceRange {
    size_t begin = 0;
    size_t end = 0;
    size_t size() const { return end - begin; }
    bool overlaps(const SliceRange& other) const {
        return begin < other.end && other.begin < end && size() > 0 && other.size() > 0;
    }
};

struct IterationPlan {
    int iteration = 0;
    SliceRange train;
    SliceRange validation;
    std::string config_hash_hex;
};

// Canonical partition: validation takes the corpus head, iteration t takes
// the t-th count-sized window after it.
inline IterationPlan plan_iteration(int t, const PipelineConfig& cfg, size_t corpus_size) {
    if (t < 0) throw ConfigError("iteration index must be >= 0");
    IterationPlan plan;
    plan.iteration = t;
    plan.config_hash_hex = config_hash(cfg);
    const size_t val = static_cast<size_t>(cfg.validation_count);
    const size_t count = static_cast<size_t>(cfg.per_iteration_count);
    plan.validation = {0, std::min(val, corpus_size)};
    plan.train.begin = val + static_cast<size_t>(t) * count;
    plan.train.end = plan.train.begin + count;
    if (plan.validation.size() < val || plan.train.end > corpus_size) {
        throw CorpusExhausted("corpus has " + std::to_string(corpus_size) +
                              " instructions; iteration " + std::to_string(t) + " needs [" +
                              std::to_string(plan.train.begin) + ", " +
                              std::to_string(plan.train.end) + ") plus " + std::to_string(val) +
                              " validation");
    }
    return plan;
}

inline void validate_plan(const IterationPlan& plan, size_t corpus_size) {
    if (plan.train.begin > plan.train.end || plan.train.end > corpus_size) {
        throw ConfigError("training slice out of range");
    }
    if (plan.validation.begin > plan.validation.end || plan.validation.end > corpus_size) {
        throw ConfigError("validation slice out of range");
    }
    if (plan.train.overlaps(plan.validation)) {
        throw ConfigError("training slice overlaps the validation slice");
    }
}

// Slices of two plans for the same run must never share instructions.
inline void ensure_disjoint(const IterationPlan& a, const IterationPlan& b) {
    if (a.train.overlaps(b.train)) {
        throw ConfigError("iteration " + std::to_string(a.iteration) + " and iteration " +
                          std::to_string(b.iteration) + " reuse instructions");
    }
}

struct Backends {
    std::shared_ptr<MockWorld> world; // null when fully live
    std::unique_ptr<TextCompleter> completer;
    std::unique_ptr<PointwiseScorer> pointwise;
    std::unique_ptr<PairwiseComparer> pairwise;
};

inline bool is_mock_endpoint(const std::string& endpoint) {
    return endpoint.rfind("mock:", 0) == 0;
}

inline Backends make_backends(const PipelineConfig& cfg, const ThoughtPrompt& prompt,
                              std::vector<double> policy = {}) {
    Backends b;
    const bool mock_gen = is_mock_endpoint(cfg.generation.endpoint);
    const bool mock_judge = is_mock_endpoint(cfg.judge.endpoint);
    if (mock_gen || mock_judge) {
        MockWorldConfig world_cfg = cfg.mock_world;
        if (cfg.generation.seed) world_cfg.rng_seed = *cfg.generation.seed;
        b.world = std::make_shared<MockWorld>(world_cfg);
    }
    if (mock_gen) {
        b.completer = std::make_unique<MockCompleter>(b.world, prompt, std::move(policy));
    } else {
        b.completer = std::make_unique<HttpCompleter>(cfg.generation);
    }
    if (mock_judge) {
        b.pointwise = std::make_unique<MockPointwiseScorer>(b.world);
        auto bias = cfg.judge.endpoint == "mock:first-wins"
                        ? MockPairwiseComparer::Bias::FirstAlwaysWins
                        : MockPairwiseComparer::Bias::None;
        b.pairwise = std::make_unique<MockPairwiseComparer>(b.world, bias);
    } else {
        JudgeHttpConfig jcfg{cfg.judge.endpoint, cfg.judge.model, cfg.judge.retries,
                             cfg.judge.timeout_ms, cfg.judge.backoff_base_ms};
        b.pointwise = std::make_unique<HttpPointwiseScorer>(jcfg);
        b.pairwise = std::make_unique<HttpPairwiseComparer>(jcfg);
    }
    return b;
}

struct InstructionRecord {
    Instruction instruction;
    std::string rendered_prompt;
    std::vector<CandidateOutput> candidates;
    ScoredSet scores;
    std::vector<Judgment> battles; // original candidate indices, pairwise mode
    bool failed = false;
    std::string failure_reason;
};

// ---------------------------------------------------------------------------
// Pipeline stages. Each stage is pure given its backends; `iterate` composes
// them, the CLI also exposes them individually with JSONL handoff files.
// ---------------------------------------------------------------------------

inline std::vector<InstructionRecord> stage_sample(const PipelineConfig& cfg,
                                                   const ThoughtPrompt& prompt,
                                                   const std::vector<Instruction>& corpus,
                                                   const SliceRange& slice,
                                                   TextCompleter& completer) {
    std::vector<InstructionRecord> records(slice.size());
    bounded_parallel_for(slice.size(), cfg.generation.max_in_flight, [&](size_t i) {
        InstructionRecord& rec = records[i];
        rec.instruction = corpus[slice.begin + i];
        try {
            rec.rendered_prompt = render_prompt(prompt, rec.instruction.text);
            rec.candidates =
                generate_parsed_candidates(completer, prompt, rec.rendered_prompt,
                                           rec.instruction.id, cfg.k, cfg.resample_on_parse_error);
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.failure_reason = e.what();
        }
    });
    if (completer.stats().attempted.load() > 0 && completer.stats().succeeded.load() == 0) {
        throw BackendExhausted("generation backend: every request failed");
    }
    return records;
}

inline void score_record_pointwise(InstructionRecord& rec, PointwiseScorer& scorer) {
    const size_t k = rec.candidates.size();
    rec.scores.instruction_id = rec.instruction.id;
    rec.scores.raw_scores.assign(k, std::numeric_limits<double>::quiet_NaN());
    rec.scores.lengths.assign(k, 0);
    rec.scores.unscorable.assign(k, true);
    for (size_t i = 0; i < k; ++i) {
        const CandidateOutput& c = rec.candidates[i];
        rec.scores.lengths[i] = static_cast<int64_t>(c.response_len_chars);
        if (!c.parse.ok) continue;
        auto s = judge_pointwise(scorer, rec.instruction.text, c.parse.response);
        if (s && std::isfinite(*s)) {
            rec.scores.raw_scores[i] = *s;
            rec.scores.unscorable[i] = false;
        }
    }
}

inline void score_record_pairwise(InstructionRecord& rec, PairwiseComparer& comparer,
                                  const EloOptions& elo_opts = {}) {
    const size_t k = rec.candidates.size();
    rec.scores.instruction_id = rec.instruction.id;
    rec.scores.raw_scores.assign(k, std::numeric_limits<double>::quiet_NaN());
    rec.scores.lengths.assign(k, 0);
    rec.scores.unscorable.assign(k, true);
    rec.battles.clear();
    std::vector<int> ok;
    for (size_t i = 0; i < k; ++i) {
        rec.scores.lengths[i] = static_cast<int64_t>(rec.candidates[i].response_len_chars);
        if (rec.candidates[i].parse.ok) ok.push_back(static_cast<int>(i));
    }
    if (ok.size() < 2) return;
    std::vector<Judgment> subset = round_robin_judgments(
        static_cast<int>(ok.size()), [&](int m, int n) {
            return judge_pair(comparer, rec.instruction.text,
                              rec.candidates[static_cast<size_t>(ok[m])].parse.response,
                              rec.candidates[static_cast<size_t>(ok[n])].parse.response);
        });
    for (const Judgment& j : subset) {
        rec.battles.push_back({ok[static_cast<size_t>(j.m)], ok[static_cast<size_t>(j.n)], j.outcome});
    }
    BattleMatrix matrix = build_battle_matrix(static_cast<int>(ok.size()), subset);
    EloScores elo = solve_elo(matrix, elo_opts);
    for (size_t pos = 0; pos < ok.size(); ++pos) {
        rec.scores.raw_scores[static_cast<size_t>(ok[pos])] = elo.scores[pos];
        rec.scores.unscorable[static_cast<size_t>(ok[pos])] = false;
    }
}

inline void stage_judge(const PipelineConfig& cfg, std::vector<InstructionRecord>& records,
                        PointwiseScorer& pointwise, PairwiseComparer& pairwise) {
    const bool use_pairwise = cfg.judge.kind == "pairwise";
    bounded_parallel_for(records.size(), cfg.generation.max_in_flight, [&](size_t i) {
        InstructionRecord& rec = records[i];
        if (rec.failed) return;
        try {
            if (use_pairwise) score_record_pairwise(rec, pairwise);
            else score_record_pointwise(rec, pointwise);
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.failure_reason = e.what();
        }
    });
    BackendStats& stats = use_pairwise ? pairwise.stats() : pointwise.stats();
    if (stats.attempted.load() > 0 && stats.succeeded.load() == 0) {
        throw BackendExhausted("judge backend: every request failed");
    }
}

struct PairingOutput {
    std::vector<PreferencePair> pairs;
    RhoSelection rho;
    int normal_pairs = 0;
    int parse_error_pairs = 0;
};

inline PairingOutput stage_build_pairs(const PipelineConfig& cfg,
                                       std::vector<InstructionRecord>& records, int iteration) {
    std::vector<ScoredSet*> sets;
    for (InstructionRecord& rec : records) {
        if (!rec.failed && !rec.scores.raw_scores.empty()) sets.push_back(&rec.scores);
    }
    PairingOutput out;
    if (sets.empty()) return out;

    // rho: fixed mode evaluates a single-point grid so the report has the
    // same shape either way.
    std::vector<ScoredSet> working;
    working.reserve(sets.size());
    for (ScoredSet* s : sets) working.push_back(*s);
    const std::vector<double> grid = cfg.length_control.mode == "fixed"
                                         ? std::vector<double>{cfg.length_control.rho}
                                         : cfg.length_control.grid;
    out.rho = select_rho(working, grid);
    for (size_t i = 0; i < sets.size(); ++i) *sets[i] = working[i];

    PairContext ctx{iteration, out.rho.rho, cfg.judge.kind};
    std::vector<InjectionCandidate> pool;
    for (InstructionRecord& rec : records) {
        if (rec.failed) continue;
        auto pair = build_pair(rec.candidates, rec.scores.adjusted_scores, rec.rendered_prompt, ctx);
        if (pair) out.pairs.push_back(std::move(*pair));

        // Injection pool: needs a scored best candidate and a parse failure
        // with actual model output (empty slots carry no format signal).
        auto sel = select_extremes(rec.scores.adjusted_scores);
        const CandidateOutput* broken = nullptr;
        for (const CandidateOutput& c : rec.candidates) {
            if (!c.parse.ok && !c.raw_text.empty()) {
                broken = &c;
                break;
            }
        }
        if (sel && broken) {
            pool.push_back({rec.instruction.id, rec.rendered_prompt,
                            rec.candidates[static_cast<size_t>(sel->chosen)].raw_text,
                            rec.scores.adjusted_scores[static_cast<size_t>(sel->chosen)],
                            broken->raw_text});
        }
    }
    out.normal_pairs = static_cast<int>(out.pairs.size());
    out.pairs = inject_parse_error_pairs(std::move(out.pairs), pool, cfg.cap_ratio, cfg.seed, ctx);
    out.parse_error_pairs = static_cast<int>(out.pairs.size()) - out.normal_pairs;
    return out;
}

// ---------------------------------------------------------------------------
// Handoff files between the sample / judge / build-pairs subcommands.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const InstructionRecord& rec, bool with_scores) {
    nlohmann::ordered_json j;
    j["id"] = rec.instruction.id;
    j["instruction"] = rec.instruction.text;
    j["prompt"] = rec.rendered_prompt;
    j["failed"] = rec.failed;
    if (rec.failed) j["failure_reason"] = rec.failure_reason;
    nlohmann::ordered_json cands = nlohmann::ordered_json::array();
    for (const CandidateOutput& c : rec.candidates) {
        nlohmann::ordered_json cj;
        cj["index"] = c.candidate_index;
        cj["raw"] = c.raw_text;
        cj["ok"] = c.parse.ok;
        if (c.parse.ok) {
            cj["thought"] = c.parse.thought;
            cj["response"] = c.parse.response;
        } else {
            cj["failure"] = std::string(parse_failure_name(c.parse.failure));
        }
        cj["thought_len"] = c.thought_len_chars;
        cj["response_len"] = c.response_len_chars;
        cands.push_back(std::move(cj));
    }
    j["candidates"] = std::move(cands);
    if (with_scores) {
        nlohmann::ordered_json raw = nlohmann::ordered_json::array();
        for (double s : rec.scores.raw_scores) {
            if (std::isfinite(s)) raw.push_back(s);
            else raw.push_back(nullptr);
        }
        j["raw_scores"] = std::move(raw);
        j["unscorable"] = rec.scores.unscorable;
        if (!rec.battles.empty()) {
            nlohmann::ordered_json battles = nlohmann::ordered_json::array();
            for (const Judgment& b : rec.battles) {
                battles.push_back({b.m, b.n, std::string(pair_outcome_name(b.outcome))});
            }
            j["battles"] = std::move(battles);
        }
    }
    return j;
}

inline InstructionRecord record_from_json(const nlohmann::json& j) {
    InstructionRecord rec;
    rec.instruction.id = j.at("id").get<std::string>();
    rec.instruction.text = j.at("instruction").get<std::string>();
    rec.rendered_prompt = j.at("prompt").get<std::string>();
    rec.failed = j.value("failed", false);
    rec.failure_reason = j.value("failure_reason", std::string());
    for (const auto& cj : j.at("candidates")) {
        CandidateOutput c;
        c.instruction_id = rec.instruction.id;
        c.candidate_index = cj.at("index").get<int>();
        c.raw_text = cj.at("raw").get<std::string>();
        if (cj.at("ok").get<bool>()) {
            c.parse = ParsedOutput::success(cj.at("thought").get<std::string>(),
                                            cj.at("response").get<std::string>());
        } else {
            std::string f = cj.value("failure", "missing_marker");
            ParseFailure pf = f == "empty_response" ? ParseFailure::EmptyResponse
                              : f == "empty_slot"   ? ParseFailure::EmptySlot
                                                    : ParseFailure::MissingMarker;
            c.parse = ParsedOutput::error(pf);
        }
        c.thought_len_chars = cj.at("thought_len").get<size_t>();
        c.response_len_chars = cj.at("response_len").get<size_t>();
        rec.candidates.push_back(std::move(c));
    }
    if (j.contains("raw_scores")) {
        const size_t k = rec.candidates.size();
        rec.scores.instruction_id = rec.instruction.id;
        rec.scores.raw_scores.assign(k, std::numeric_limits<double>::quiet_NaN());
        rec.scores.lengths.assign(k, 0);
        rec.scores.unscorable = j.at("unscorable").get<std::vector<bool>>();
        const auto& raw = j.at("raw_scores");
        for (size_t i = 0; i < k; ++i) {
            rec.scores.lengths[i] = static_cast<int64_t>(rec.candidates[i].response_len_chars);
            if (!raw.at(i).is_null()) rec.scores.raw_scores[i] = raw.at(i).get<double>();
        }
    }
    return rec;
}

inline void write_records(const std::vector<InstructionRecord>& records,
                          const std::filesystem::path& path, bool with_scores) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open records file for writing: " + path.string());
    for (const InstructionRecord& rec : records) {
        out << record_to_json(rec, with_scores).dump() << '\n';
    }
}

inline std::vector<InstructionRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open records file: " + path.string());
    std::vector<InstructionRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_view(line).empty()) continue;
        records.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    return records;
}

// ---------------------------------------------------------------------------
// run_iteration
// ---------------------------------------------------------------------------

struct IterationResult {
    IterationPlan plan;
    std::filesystem::path dataset_path;
    std::filesystem::path report_path;
    std::filesystem::path manifest_path;
    std::filesystem::path battle_log_path;
    std::vector<PreferencePair> pairs;
    int normal_pairs = 0;
    int parse_error_pairs = 0;
    int instructions_processed = 0;
    int instructions_skipped = 0;
    double selected_rho = 0.0;
    bool rho_satisfied = false;
};

inline IterationResult run_iteration(const IterationPlan& plan, const PipelineConfig& cfg,
                                     const std::vector<Instruction>& corpus,
                                     Backends* injected = nullptr) {
    validate_config(cfg);
    validate_plan(plan, corpus.size());
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);

    std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);
    CacheStore cache = cfg.cache_enabled ? CacheStore(out_dir / "cache") : CacheStore();

    Backends local;
    if (!injected) local = make_backends(cfg, prompt);
    Backends& backend = injected ? *injected : local;

    CachingCompleter completer(*backend.completer, cache);
    CachingPointwiseScorer pointwise(*backend.pointwise, cache);
    CachingPairwiseComparer pairwise(*backend.pairwise, cache);

    std::vector<InstructionRecord> records =
        stage_sample(cfg, prompt, corpus, plan.train, completer);
    stage_judge(cfg, records, pointwise, pairwise);
    PairingOutput pairing = stage_build_pairs(cfg, records, plan.iteration);

    IterationResult result;
    result.plan = plan;
    result.pairs = std::move(pairing.pairs);
    result.normal_pairs = pairing.normal_pairs;
    result.parse_error_pairs = pairing.parse_error_pairs;
    result.selected_rho = pairing.rho.rho;
    result.rho_satisfied = pairing.rho.satisfied;
    for (const InstructionRecord& rec : records) {
        if (rec.failed) ++result.instructions_skipped;
        else ++result.instructions_processed;
    }

    const std::string tag = "iter" + std::to_string(plan.iteration);
    if (!result.pairs.empty()) {
        result.dataset_path = out_dir / ("dataset_" + tag + ".jsonl");
        emit_dataset(result.pairs, result.dataset_path);
    }

    std::vector<ScoredSet> sets;
    for (const InstructionRecord& rec : records) {
        if (!rec.failed && !rec.scores.raw_scores.empty()) sets.push_back(rec.scores);
    }
    result.report_path = out_dir / ("report_" + tag + ".json");
    {
        std::ofstream out(result.report_path, std::ios::binary);
        if (!out) throw IoError("cannot write scoring report: " + result.report_path.string());
        out << scoring_report_json(sets, pairing.rho).dump(2) << '\n';
    }

    if (cfg.emit_battle_logs && cfg.judge.kind == "pairwise") {
        result.battle_log_path = out_dir / ("battles_" + tag + ".csv");
        std::string csv = "instruction_id,m,n,outcome\n";
        for (const InstructionRecord& rec : records) {
            append_battle_log_csv(csv, rec.instruction.id, rec.battles);
        }
        std::ofstream out(result.battle_log_path, std::ios::binary);
        out << csv;
    }

    nlohmann::ordered_json manifest;
    manifest["iteration"] = plan.iteration;
    manifest["config_hash"] = plan.config_hash_hex.empty() ? config_hash(cfg) : plan.config_hash_hex;
    manifest["seed"] = cfg.seed;
    manifest["generation_backend"] = backend.completer->identity();
    manifest["judge_kind"] = cfg.judge.kind;
    manifest["judge_identity"] =
        cfg.judge.kind == "pairwise" ? backend.pairwise->identity() : backend.pointwise->identity();
    manifest["prompt_kind"] = std::string(prompt_kind_name(prompt.kind));
    manifest["selected_rho"] = result.selected_rho;
    manifest["rho_satisfied"] = result.rho_satisfied;
    manifest["slice"] = {{"begin", plan.train.begin}, {"end", plan.train.end}};
    manifest["validation"] = {{"begin", plan.validation.begin}, {"end", plan.validation.end}};
    manifest["counts"] = {{"instructions", plan.train.size()},
                          {"processed", result.instructions_processed},
                          {"skipped", result.instructions_skipped},
                          {"normal_pairs", result.normal_pairs},
                          {"parse_error_pairs", result.parse_error_pairs},
                          {"total_pairs", result.pairs.size()}};
    nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
    for (const InstructionRecord& rec : records) {
        if (rec.failed) skipped.push_back({{"id", rec.instruction.id}, {"reason", rec.failure_reason}});
    }
    manifest["skip_log"] = std::move(skipped);
    result.manifest_path = out_dir / ("manifest_" + tag + ".json");
    {
        std::ofstream out(result.manifest_path, std::ios::binary);
        if (!out) throw IoError("cannot write manifest: " + result.manifest_path.string());
        out << manifest.dump(2) << '\n';
    }
    return result;
}

// ---------------------------------------------------------------------------
// Closed-loop mock simulation
// ---------------------------------------------------------------------------

// Surrogate policy over thought strategies. This stands in for the external
// preference-training step so the loop can be exercised end to end; it makes
// no claim of equivalence to an actual weight update.
struct SimPolicy {
    std::vector<double> weights; // probability vector
    double learning_rate = 0.5;  // eta
};

struct SimulationResult {
    std::vector<double> expected_quality;        // policy in effect per iteration
    std::vector<std::vector<double>> policies;   // snapshot per iteration
    std::vector<IterationResult> iterations;
};

inline std::vector<Instruction> synthetic_corpus(int iteration, int count) {
    std::vector<Instruction> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "sim-t%d-i%05d", iteration, i);
        out.push_back({id, "Synthetic task " + std::to_string(i) + " for loop iteration " +
                               std::to_string(iteration)});
    }
    return out;
}

// Exponentiated reweighting toward strategies that produced chosen outputs
// and away from strategies that produced rejected ones.
inline void update_sim_policy(SimPolicy& policy, const std::vector<PreferencePair>& pairs) {
    if (policy.learning_rate == 0.0 || pairs.empty()) return;
    std::vector<double> delta(policy.weights.size(), 0.0);
    for (const PreferencePair& pair : pairs) {
        int cs = MockWorld::strategy_of(pair.chosen);
        int rs = MockWorld::strategy_of(pair.rejected);
        if (cs >= 0 && static_cast<size_t>(cs) < delta.size()) delta[static_cast<size_t>(cs)] += 1.0;
        if (rs >= 0 && static_cast<size_t>(rs) < delta.size()) delta[static_cast<size_t>(rs)] -= 1.0;
    }
    double total = static_cast<double>(pairs.size());
    double sum = 0.0;
    for (size_t s = 0; s < policy.weights.size(); ++s) {
        policy.weights[s] *= std::exp(policy.learning_rate * delta[s] / total);
        sum += policy.weights[s];
    }
    for (double& w : policy.weights) w /= sum;
}

inline SimulationResult simulate_loop(const PipelineConfig& cfg, int iterations,
                                      SimPolicy start = {}) {
    if (iterations < 1) throw ConfigError("simulate needs iterations >= 1");
    if (!is_mock_endpoint(cfg.generation.endpoint) || !is_mock_endpoint(cfg.judge.endpoint)) {
        throw ConfigError("simulate requires mock generation and judge endpoints");
    }
    PipelineConfig sim_cfg = cfg;
    sim_cfg.validation_count = 0;
    validate_config(sim_cfg);
    ThoughtPrompt prompt = resolve_prompt(sim_cfg.prompt);

    SimPolicy policy = start;
    policy.learning_rate = cfg.sim_learning_rate;
    auto world_probe = MockWorld(sim_cfg.mock_world);
    if (policy.weights.empty()) policy.weights = uniform_policy(world_probe.strategy_count());

    SimulationResult result;
    for (int t = 0; t < iterations; ++t) {
        Backends backends = make_backends(sim_cfg, prompt, policy.weights);
        result.expected_quality.push_back(backends.world->expected_quality(policy.weights));
        result.policies.push_back(policy.weights);

        std::vector<Instruction> corpus = synthetic_corpus(t, sim_cfg.per_iteration_count);
        IterationPlan plan;
        plan.iteration = t;
        plan.train = {0, corpus.size()};
        plan.validation = {0, 0};
        plan.config_hash_hex = config_hash(sim_cfg);
        IterationResult iter = run_iteration(plan, sim_cfg, corpus, &backends);
        update_sim_policy(policy, iter.pairs);
        result.iterations.push_back(std::move(iter));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Validation scoring
// ---------------------------------------------------------------------------

struct ValidationScore {
    double mean_score = 0.0;
    int scored = 0;
    int unscored = 0;
};

// Mean pointwise judge score over one generation per validation instruction.
// External training harnesses use this number for checkpoint selection.
inline ValidationScore score_validation(const PipelineConfig& cfg,
                                        const std::vector<Instruction>& corpus,
                                        std::vector<double> policy = {}) {
    validate_config(cfg);
    SliceRange validation{0, std::min(static_cast<size_t>(cfg.validation_count), corpus.size())};
    if (validation.size() == 0) throw ConfigError("validation slice is empty");
    if (static_cast<size_t>(cfg.validation_count) > corpus.size()) {
        throw CorpusExhausted("corpus smaller than validation_count");
    }
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    Backends backends = make_backends(cfg, prompt, std::move(policy));

    std::vector<std::optional<double>> scores(validation.size());
    bounded_parallel_for(validation.size(), cfg.generation.max_in_flight, [&](size_t i) {
        const Instruction& ins = corpus[validation.begin + i];
        std::string rendered = render_prompt(prompt, ins.text);
        auto raws = sample_candidates(*backends.completer, rendered, 1, ins.id,
                                      SampleOptions{/*training=*/false});
        CandidateOutput c = make_candidate(ins.id, 0, raws[0].value_or(std::string()), prompt);
        if (c.parse.ok) {
            scores[i] = judge_pointwise(*backends.pointwise, ins.text, c.parse.response);
        }
    });
    ValidationScore out;
    double sum = 0.0;
    for (const auto& s : scores) {
        if (s && std::isfinite(*s)) {
            sum += *s;
            ++out.scored;
        } else {
            ++out.unscored;
        }
    }
    if (out.scored == 0) throw BackendExhausted("no validation responses could be scored");
    out.mean_score = sum / out.scored;
    return out;
}

} // namespace prefgen
