#include "prefgen/orchestrator.hpp"

#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace prefgen;

namespace {

PipelineConfig mock_config(const std::filesystem::path& out_dir, uint64_t seed = 7) {
    PipelineConfig cfg;
    cfg.out_dir = out_dir.string();
    cfg.seed = seed;
    cfg.mock_world.rng_seed = seed;
    cfg.per_iteration_count = 25;
    cfg.validation_count = 10;
    cfg.generation.max_in_flight = 4;
    return cfg;
}

std::vector<Instruction> make_corpus(int n) {
    std::vector<Instruction> corpus;
    for (int i = 0; i < n; ++i) {
        corpus.push_back({"q" + std::to_string(i), "Task number " + std::to_string(i)});
    }
    return corpus;
}

} // namespace

TEST(LoadInstructions, JsonlAndPlainText) {
    test_util::TempDir dir("corpus");
    auto jsonl = dir.path() / "a.jsonl";
    test_util::write_file(jsonl, "{\"id\":\"x\",\"text\":\"first\"}\n{\"id\":\"y\",\"text\":\"second\"}\n");
    auto loaded = load_instructions(jsonl);
    ASSERT_EQ(loaded.size(), 2u);
    EXPECT_EQ(loaded[0].id, "x");
    EXPECT_EQ(loaded[1].text, "second");

    auto plain = dir.path() / "b.txt";
    test_util::write_file(plain, "one instruction\n\nanother instruction\n");
    auto lines = load_instructions(plain);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0].id, "line-000001");
    EXPECT_EQ(lines[1].id, "line-000003");
    EXPECT_EQ(lines[1].text, "another instruction");

    auto dupes = dir.path() / "c.jsonl";
    test_util::write_file(dupes, "{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n");
    EXPECT_THROW(load_instructions(dupes), ConfigError);
}

TEST(PlanIteration, SlicesAreDisjointAndSized) {
    test_util::TempDir dir("plan");
    auto cfg = mock_config(dir.path());
    auto p0 = plan_iteration(0, cfg, 200);
    auto p1 = plan_iteration(1, cfg, 200);
    auto p2 = plan_iteration(2, cfg, 200);
    EXPECT_EQ(p0.train.begin, 10u);
    EXPECT_EQ(p0.train.size(), 25u);
    EXPECT_EQ(p1.train.begin, 35u);
    ensure_disjoint(p0, p1);
    ensure_disjoint(p1, p2);
    EXPECT_FALSE(p0.train.overlaps(p0.validation));
}

TEST(PlanIteration, CorpusExhaustedThrows) {
    test_util::TempDir dir("plan");
    auto cfg = mock_config(dir.path());
    EXPECT_NO_THROW(plan_iteration(0, cfg, 35));
    EXPECT_THROW(plan_iteration(1, cfg, 35), CorpusExhausted);
    EXPECT_THROW(plan_iteration(0, cfg, 20), CorpusExhausted);
}

TEST(PlanIteration, OverlappingSlicesRejected) {
    IterationPlan a;
    a.train = {10, 35};
    IterationPlan b;
    b.iteration = 1;
    b.train = {30, 55};
    EXPECT_THROW(ensure_disjoint(a, b), ConfigError);

    IterationPlan bad;
    bad.train = {5, 30};
    bad.validation = {0, 10};
    EXPECT_THROW(validate_plan(bad, 100), ConfigError);
}

TEST(RunIteration, DeterministicBytesAcrossRuns) {
    test_util::TempDir dir1("run1");
    test_util::TempDir dir2("run2");
    auto corpus = make_corpus(60);
    auto cfg1 = mock_config(dir1.path());
    auto cfg2 = mock_config(dir2.path());
    auto r1 = run_iteration(plan_iteration(0, cfg1, corpus.size()), cfg1, corpus);
    auto r2 = run_iteration(plan_iteration(0, cfg2, corpus.size()), cfg2, corpus);
    ASSERT_FALSE(r1.dataset_path.empty());
    EXPECT_EQ(test_util::read_file(r1.dataset_path), test_util::read_file(r2.dataset_path));
    EXPECT_EQ(test_util::read_file(r1.report_path), test_util::read_file(r2.report_path));
    EXPECT_GT(r1.pairs.size(), 0u);
    EXPECT_LE(r1.parse_error_pairs,
              static_cast<int>(0.10 * static_cast<double>(r1.pairs.size()) + 1e-9));
}

TEST(RunIteration, DeterministicAcrossWorkerCounts) {
    test_util::TempDir dir1("w1");
    test_util::TempDir dir2("w8");
    auto corpus = make_corpus(50);
    auto cfg1 = mock_config(dir1.path());
    cfg1.generation.max_in_flight = 1;
    auto cfg8 = mock_config(dir2.path());
    cfg8.generation.max_in_flight = 8;
    // max_in_flight participates in the config hash but not in any RNG
    // stream; outputs must be byte-identical.
    auto r1 = run_iteration(plan_iteration(0, cfg1, corpus.size()), cfg1, corpus);
    auto r8 = run_iteration(plan_iteration(0, cfg8, corpus.size()), cfg8, corpus);
    EXPECT_EQ(test_util::read_file(r1.dataset_path), test_util::read_file(r8.dataset_path));
}

TEST(RunIteration, PointwiseJudgeCallCount) {
    test_util::TempDir dir("calls");
    auto corpus = make_corpus(45);
    auto cfg = mock_config(dir.path());
    cfg.cache_enabled = false;
    cfg.mock_world.parse_fail_prob = {0.0};
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    Backends backends = make_backends(cfg, prompt);
    auto* world = backends.world.get();
    run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus, &backends);
    EXPECT_EQ(world->stats().pointwise_calls.load(), 25u * 8u);
    EXPECT_EQ(world->stats().pairwise_calls.load(), 0u);
}

TEST(RunIteration, PairwiseJudgeCallCount) {
    test_util::TempDir dir("calls");
    auto corpus = make_corpus(45);
    auto cfg = mock_config(dir.path());
    cfg.cache_enabled = false;
    cfg.judge.kind = "pairwise";
    cfg.mock_world.parse_fail_prob = {0.0};
    cfg.emit_battle_logs = true;
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    Backends backends = make_backends(cfg, prompt);
    auto* world = backends.world.get();
    auto result = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus, &backends);
    // K*(K-1) ordered pairs per fully parsed instruction.
    EXPECT_EQ(world->stats().pairwise_calls.load(), 25u * 8u * 7u);
    EXPECT_EQ(world->stats().pointwise_calls.load(), 0u);
    ASSERT_FALSE(result.battle_log_path.empty());
    std::string log = test_util::read_file(result.battle_log_path);
    EXPECT_NE(log.find("instruction_id,m,n,outcome"), std::string::npos);
    EXPECT_NE(log.find("q10,"), std::string::npos);
}

TEST(RunIteration, CrashResumeReplaysFromCache) {
    test_util::TempDir dir("resume");
    auto corpus = make_corpus(45);
    auto cfg = mock_config(dir.path());

    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    Backends first = make_backends(cfg, prompt);
    auto* world1 = first.world.get();
    auto r1 = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus, &first);
    uint64_t calls_first = world1->stats().generate_calls.load();
    ASSERT_GT(calls_first, 0u);

    // Same out_dir: everything is cached, no backend traffic at all.
    Backends second = make_backends(cfg, prompt);
    auto* world2 = second.world.get();
    auto r2 = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus, &second);
    EXPECT_EQ(world2->stats().generate_calls.load(), 0u);
    EXPECT_EQ(world2->stats().pointwise_calls.load(), 0u);
    EXPECT_EQ(test_util::read_file(r1.dataset_path), test_util::read_file(r2.dataset_path));
}

TEST(RunIteration, PartialCacheResumesWithOnlyMissingCalls) {
    test_util::TempDir dir("partial");
    auto corpus = make_corpus(45);
    auto cfg = mock_config(dir.path());
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);

    // Interrupted run: only the first 12 of 25 instructions were processed
    // (their generations and judgments are in the cache).
    IterationPlan partial = plan_iteration(0, cfg, corpus.size());
    partial.train.end = partial.train.begin + 12;
    Backends first = make_backends(cfg, prompt);
    run_iteration(partial, cfg, corpus, &first);
    uint64_t calls_partial = first.world->stats().generate_calls.load();
    ASSERT_GT(calls_partial, 0u);

    // Resume with the full slice: only the remaining instructions hit the
    // backend. Call counts are additive because the mock is deterministic.
    Backends second = make_backends(cfg, prompt);
    auto resumed = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus, &second);
    uint64_t calls_resume = second.world->stats().generate_calls.load();

    test_util::TempDir fresh_dir("fresh");
    auto fresh_cfg = mock_config(fresh_dir.path());
    Backends third = make_backends(fresh_cfg, prompt);
    auto fresh = run_iteration(plan_iteration(0, fresh_cfg, corpus.size()), fresh_cfg, corpus, &third);
    uint64_t calls_full = third.world->stats().generate_calls.load();

    EXPECT_EQ(calls_partial + calls_resume, calls_full);
    EXPECT_LT(calls_resume, calls_full);
    EXPECT_EQ(test_util::read_file(resumed.dataset_path), test_util::read_file(fresh.dataset_path));
}

TEST(RunIteration, ManifestRecordsCountsAndConfigHash) {
    test_util::TempDir dir("manifest");
    auto corpus = make_corpus(45);
    auto cfg = mock_config(dir.path());
    auto result = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus);
    auto manifest = nlohmann::json::parse(test_util::read_file(result.manifest_path));
    EXPECT_EQ(manifest["iteration"], 0);
    EXPECT_EQ(manifest["config_hash"], config_hash(cfg));
    EXPECT_EQ(manifest["counts"]["instructions"], 25);
    EXPECT_EQ(manifest["counts"]["total_pairs"].get<size_t>(), result.pairs.size());
    EXPECT_EQ(manifest["judge_kind"], "pointwise");
    EXPECT_EQ(manifest["slice"]["begin"], 10);
    EXPECT_EQ(manifest["slice"]["end"], 35);
}

TEST(RunIteration, DatasetRoundTripsStructurally) {
    test_util::TempDir dir("roundtrip");
    auto corpus = make_corpus(45);
    auto cfg = mock_config(dir.path());
    auto result = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus);
    auto parsed = read_dataset(result.dataset_path);
    ASSERT_EQ(parsed.size(), result.pairs.size());
    for (size_t i = 0; i < parsed.size(); ++i) {
        EXPECT_EQ(parsed[i].instruction_id, result.pairs[i].instruction_id);
        EXPECT_EQ(parsed[i].chosen, result.pairs[i].chosen);
        EXPECT_EQ(parsed[i].rejected, result.pairs[i].rejected);
        EXPECT_EQ(parsed[i].meta.rejected_is_parse_error,
                  result.pairs[i].meta.rejected_is_parse_error);
    }
}

TEST(RunIteration, ParseErrorsNeverChosenAndCapHolds) {
    test_util::TempDir dir("parse-errors");
    auto corpus = make_corpus(120);
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 100;
    cfg.validation_count = 0;
    cfg.mock_world.parse_fail_prob = {0.30};
    auto result = run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus);
    ASSERT_GT(result.pairs.size(), 0u);
    int parse_error_rejected = 0;
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    for (const PreferencePair& pair : result.pairs) {
        EXPECT_TRUE(split_output(prompt, pair.chosen).ok);
        if (pair.meta.rejected_is_parse_error) {
            ++parse_error_rejected;
            EXPECT_FALSE(split_output(prompt, pair.rejected).ok);
        }
    }
    EXPECT_EQ(parse_error_rejected, result.parse_error_pairs);
    EXPECT_GT(parse_error_rejected, 0);
    EXPECT_LE(static_cast<double>(parse_error_rejected),
              0.10 * static_cast<double>(result.pairs.size()) + 1e-9);
}

TEST(RunIteration, DeadBackendRaisesExhaustion) {
    test_util::TempDir dir("dead");
    auto corpus = make_corpus(40);
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 3;
    cfg.generation.endpoint = "http://127.0.0.1:9"; // discard port, nothing listens
    cfg.generation.retries = 1;
    cfg.generation.timeout_ms = 200;
    cfg.generation.backoff_base_ms = 1;
    EXPECT_THROW(run_iteration(plan_iteration(0, cfg, corpus.size()), cfg, corpus),
                 BackendExhausted);
}

TEST(Simulate, EtaZeroGivesFlatTrace) {
    test_util::TempDir dir("sim-flat");
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 40;
    cfg.sim_learning_rate = 0.0;
    auto sim = simulate_loop(cfg, 3);
    ASSERT_EQ(sim.expected_quality.size(), 3u);
    EXPECT_DOUBLE_EQ(sim.expected_quality[0], sim.expected_quality[1]);
    EXPECT_DOUBLE_EQ(sim.expected_quality[1], sim.expected_quality[2]);
}

TEST(Simulate, DefaultWorldImprovesMonotonically) {
    test_util::TempDir dir("sim");
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 100;
    auto sim = simulate_loop(cfg, 4);
    ASSERT_EQ(sim.expected_quality.size(), 4u);
    for (size_t t = 1; t < sim.expected_quality.size(); ++t) {
        EXPECT_GE(sim.expected_quality[t], sim.expected_quality[t - 1]);
    }
    EXPECT_GT(sim.expected_quality.back(), sim.expected_quality.front());
}

TEST(Simulate, SingleStrategyWorldIsFlatAtItsQuality) {
    test_util::TempDir dir("sim-single");
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 30;
    cfg.mock_world.strategy_qualities = {0.65};
    auto sim = simulate_loop(cfg, 3);
    for (double q : sim.expected_quality) EXPECT_DOUBLE_EQ(q, 0.65);
}

TEST(Simulate, FreshInstructionIdsAcrossIterations) {
    test_util::TempDir dir("sim-fresh");
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 30;
    auto sim = simulate_loop(cfg, 4);
    std::set<std::string> seen;
    for (const IterationResult& iter : sim.iterations) {
        EXPECT_EQ(iter.plan.train.size(), 30u);
        std::set<std::string> here;
        for (const PreferencePair& pair : iter.pairs) here.insert(pair.instruction_id);
        for (const std::string& id : here) {
            EXPECT_TRUE(seen.insert(id).second) << "instruction reused across iterations: " << id;
        }
    }
}

TEST(ScoreValidation, HigherQualityPolicyScoresHigher) {
    test_util::TempDir dir("val");
    auto cfg = mock_config(dir.path());
    cfg.validation_count = 40;
    auto corpus = make_corpus(40);
    // Policy concentrated on the worst vs the best strategy.
    auto low = score_validation(cfg, corpus, {1.0, 0.0, 0.0, 0.0});
    auto high = score_validation(cfg, corpus, {0.0, 0.0, 0.0, 1.0});
    EXPECT_LT(low.mean_score, high.mean_score);
}

TEST(ScoreValidation, DeterministicGivenSeed) {
    test_util::TempDir dir("val");
    auto cfg = mock_config(dir.path());
    cfg.validation_count = 25;
    auto corpus = make_corpus(30);
    auto a = score_validation(cfg, corpus);
    auto b = score_validation(cfg, corpus);
    EXPECT_DOUBLE_EQ(a.mean_score, b.mean_score);
    EXPECT_EQ(a.scored, b.scored);
}

TEST(ScoreValidation, EmptySliceThrows) {
    test_util::TempDir dir("val");
    auto cfg = mock_config(dir.path());
    cfg.validation_count = 0;
    EXPECT_THROW(score_validation(cfg, make_corpus(10)), ConfigError);
}

TEST(Config, LoadValidateAndHash) {
    test_util::TempDir dir("cfg");
    auto path = dir.path() / "config.json";
    test_util::write_file(path, R"({
      "prompt": {"kind": "generic"},
      "k": 4,
      "seed": 11,
      "generation": {"endpoint": "mock:", "temperature": 0.7, "max_in_flight": 2},
      "judge": {"kind": "pairwise", "endpoint": "mock:"},
      "length_control": {"mode": "fixed", "rho": 0.2},
      "cap_ratio": 0.05,
      "per_iteration_count": 12,
      "validation_count": 3
    })");
    auto cfg = load_config(path);
    EXPECT_EQ(cfg.prompt.kind, PromptKind::Generic);
    EXPECT_EQ(cfg.k, 4);
    EXPECT_EQ(cfg.judge.kind, "pairwise");
    EXPECT_EQ(cfg.length_control.mode, "fixed");
    EXPECT_DOUBLE_EQ(cfg.length_control.rho, 0.2);
    EXPECT_EQ(config_hash(cfg), config_hash(cfg));
    auto other = cfg;
    other.seed = 12;
    EXPECT_NE(config_hash(cfg), config_hash(other));
}

TEST(Config, InvalidValuesRejected) {
    PipelineConfig cfg;
    cfg.k = 1;
    EXPECT_THROW(validate_config(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.judge.kind = "oracle";
    EXPECT_THROW(validate_config(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.length_control.grid = {0.2, 0.1};
    EXPECT_THROW(validate_config(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.cap_ratio = 1.5;
    EXPECT_THROW(validate_config(cfg), ConfigError);
    cfg = PipelineConfig{};
    cfg.prompt.kind = PromptKind::Custom;
    EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(Records, HandoffFileRoundTrip) {
    test_util::TempDir dir("records");
    auto corpus = make_corpus(20);
    auto cfg = mock_config(dir.path());
    cfg.per_iteration_count = 8;
    cfg.validation_count = 0;
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    Backends backends = make_backends(cfg, prompt);
    auto records = stage_sample(cfg, prompt, corpus, {0, 8}, *backends.completer);
    stage_judge(cfg, records, *backends.pointwise, *backends.pairwise);

    auto path = dir.path() / "scored.jsonl";
    write_records(records, path, /*with_scores=*/true);
    auto loaded = read_records(path);
    ASSERT_EQ(loaded.size(), records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(loaded[i].instruction.id, records[i].instruction.id);
        ASSERT_EQ(loaded[i].candidates.size(), records[i].candidates.size());
        for (size_t c = 0; c < records[i].candidates.size(); ++c) {
            EXPECT_EQ(loaded[i].candidates[c].raw_text, records[i].candidates[c].raw_text);
            EXPECT_EQ(loaded[i].candidates[c].parse.ok, records[i].candidates[c].parse.ok);
        }
        for (size_t c = 0; c < records[i].scores.raw_scores.size(); ++c) {
            double a = loaded[i].scores.raw_scores[c];
            double b = records[i].scores.raw_scores[c];
            EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
        }
    }
    // Pairing from reloaded records matches pairing from live records.
    auto cfg2 = cfg;
    auto live = stage_build_pairs(cfg, records, 0);
    auto reloaded = stage_build_pairs(cfg2, loaded, 0);
    ASSERT_EQ(live.pairs.size(), reloaded.pairs.size());
    for (size_t i = 0; i < live.pairs.size(); ++i) {
        EXPECT_EQ(live.pairs[i].chosen, reloaded.pairs[i].chosen);
        EXPECT_EQ(live.pairs[i].rejected, reloaded.pairs[i].rejected);
    }
}
