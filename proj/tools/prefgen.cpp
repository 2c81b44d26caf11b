// prefgen: preference-data pipeline CLI.
//
// Subcommands: sample, judge, build-pairs, iterate, evaluate, simulate,
// score-validation. Exit codes: 0 success, 2 config error, 3 backend
// exhaustion, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prefgen/config.hpp"
#include "prefgen/eval.hpp"
#include "prefgen/orchestrator.hpp"

namespace {

using namespace prefgen;

struct EvalSide {
    std::string response;
    double thought_len = std::numeric_limits<double>::quiet_NaN();
};

// {"id", "response"} uses the response verbatim; {"id", "raw"} is split with
// the configured thought prompt (parse failures are skipped and counted).
std::unordered_map<std::string, EvalSide> load_responses(const std::filesystem::path& path,
                                                         const ThoughtPrompt& prompt,
                                                         int& parse_failures) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open responses file: " + path.string());
    std::unordered_map<std::string, EvalSide> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_view(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        std::string id = j.at("id").get<std::string>();
        EvalSide side;
        if (j.contains("response")) {
            side.response = j.at("response").get<std::string>();
        } else {
            ParsedOutput parsed = split_output(prompt, j.at("raw").get<std::string>());
            if (!parsed.ok) {
                ++parse_failures;
                continue;
            }
            side.response = parsed.response;
            side.thought_len = static_cast<double>(utf8_length(parsed.thought));
        }
        out[id] = std::move(side);
    }
    return out;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

int cmd_sample(const PipelineConfig& cfg, const std::string& instructions_path,
               const std::string& out_path, std::optional<size_t> begin,
               std::optional<size_t> end) {
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    auto corpus = load_instructions(instructions_path);
    SliceRange slice{begin.value_or(0), end.value_or(corpus.size())};
    if (slice.begin > slice.end || slice.end > corpus.size()) throw ConfigError("bad slice range");
    Backends backends = make_backends(cfg, prompt);
    auto records = stage_sample(cfg, prompt, corpus, slice, *backends.completer);
    write_records(records, out_path, /*with_scores=*/false);
    std::cout << "sampled " << records.size() << " instructions x " << cfg.k << " candidates -> "
              << out_path << "\n";
    return 0;
}

int cmd_judge(const PipelineConfig& cfg, const std::string& candidates_path,
              const std::string& out_path, const std::string& battle_log) {
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    auto records = read_records(candidates_path);
    Backends backends = make_backends(cfg, prompt);
    stage_judge(cfg, records, *backends.pointwise, *backends.pairwise);
    write_records(records, out_path, /*with_scores=*/true);
    if (!battle_log.empty() && cfg.judge.kind == "pairwise") {
        std::string csv = "instruction_id,m,n,outcome\n";
        for (const auto& rec : records) append_battle_log_csv(csv, rec.instruction.id, rec.battles);
        std::ofstream out(battle_log, std::ios::binary);
        if (!out) throw IoError("cannot write battle log: " + battle_log);
        out << csv;
    }
    std::cout << "judged " << records.size() << " instructions (" << cfg.judge.kind << ") -> "
              << out_path << "\n";
    return 0;
}

int cmd_build_pairs(const PipelineConfig& cfg, const std::string& scored_path,
                    const std::string& out_path, const std::string& report_path, int iteration) {
    auto records = read_records(scored_path);
    PairingOutput pairing = stage_build_pairs(cfg, records, iteration);
    if (pairing.pairs.empty()) {
        std::cerr << "no pairs could be built\n";
        return 1;
    }
    emit_dataset(pairing.pairs, out_path);
    if (!report_path.empty()) {
        std::vector<ScoredSet> sets;
        for (const auto& rec : records) {
            if (!rec.failed && !rec.scores.raw_scores.empty()) sets.push_back(rec.scores);
        }
        write_json_file(report_path, scoring_report_json(sets, pairing.rho));
    }
    std::cout << "emitted " << pairing.pairs.size() << " pairs (" << pairing.parse_error_pairs
              << " parse-error rejected, rho=" << pairing.rho.rho << ") -> " << out_path << "\n";
    return 0;
}

int cmd_iterate(const PipelineConfig& cfg, const std::string& instructions_path, int iteration) {
    auto corpus = load_instructions(instructions_path);
    IterationPlan plan = plan_iteration(iteration, cfg, corpus.size());
    IterationResult result = run_iteration(plan, cfg, corpus);
    std::cout << "iteration " << iteration << ": " << result.pairs.size() << " pairs ("
              << result.parse_error_pairs << " parse-error rejected), rho=" << result.selected_rho
              << (result.rho_satisfied ? "" : " (grid exhausted)") << ", skipped "
              << result.instructions_skipped << "\n"
              << "dataset:  " << result.dataset_path.string() << "\n"
              << "report:   " << result.report_path.string() << "\n"
              << "manifest: " << result.manifest_path.string() << "\n";
    return 0;
}

int cmd_evaluate(const PipelineConfig& cfg, const std::string& instructions_path,
                 const std::string& a_path, const std::string& b_path,
                 const std::string& out_path, const std::string& style_name,
                 std::optional<uint64_t> order_seed, bool print_table) {
    ThoughtPrompt prompt = resolve_prompt(cfg.prompt);
    EvalStyle style;
    if (style_name == "graded") style = EvalStyle::GradedSingleOrder;
    else if (style_name == "graded-both") style = EvalStyle::GradedBothOrders;
    else if (style_name == "binary") style = EvalStyle::BinaryBothOrders;
    else throw ConfigError("style must be graded, graded-both or binary");

    auto corpus = load_instructions(instructions_path);
    int parse_failures = 0;
    auto side_a = load_responses(a_path, prompt, parse_failures);
    auto side_b = load_responses(b_path, prompt, parse_failures);

    std::unique_ptr<PairwiseEvaluator> evaluator;
    std::unique_ptr<CategoryJudge> category_judge;
    std::shared_ptr<MockWorld> world;
    if (is_mock_endpoint(cfg.judge.endpoint)) {
        world = std::make_shared<MockWorld>(cfg.mock_world);
        evaluator = std::make_unique<MockEvaluator>(world);
        category_judge = std::make_unique<MockCategoryJudge>(cfg.seed);
    } else {
        JudgeHttpConfig jcfg{cfg.judge.endpoint, cfg.judge.model, cfg.judge.retries,
                             cfg.judge.timeout_ms, cfg.judge.backoff_base_ms};
        evaluator = std::make_unique<HttpEvaluator>(jcfg);
        category_judge = std::make_unique<HttpCategoryJudge>(jcfg);
    }

    std::vector<CategoryAssignment> assignments;
    std::vector<EvalScore> scores;
    std::unordered_map<std::string, double> thought_lengths;
    int malformed = 0;
    int missing = 0;
    for (const Instruction& ins : corpus) {
        auto a = side_a.find(ins.id);
        auto b = side_b.find(ins.id);
        if (a == side_a.end() || b == side_b.end()) {
            ++missing;
            continue;
        }
        assignments.push_back(assign_category(*category_judge, ins.id, ins.text));
        EvalOutcome outcome =
            evaluate_pairwise(*evaluator, ins.id, ins.text, a->second.response,
                              b->second.response, style, order_seed.value_or(cfg.seed));
        if (!outcome.valid) {
            ++malformed;
            continue;
        }
        scores.push_back({ins.id, outcome.score_a});
        if (std::isfinite(a->second.thought_len)) thought_lengths[ins.id] = a->second.thought_len;
    }

    CategoryReport report = category_report(assignments, scores, thought_lengths);
    report.malformed_excluded = malformed;
    nlohmann::ordered_json j = category_report_json(report);
    j["style"] = style_name;
    j["missing_pairs"] = missing;
    j["side_parse_failures"] = parse_failures;
    double overall = 0.0;
    for (const EvalScore& s : scores) overall += s.score;
    j["overall_win_rate"] = scores.empty() ? 0.5 : overall / static_cast<double>(scores.size());
    write_json_file(out_path, j);
    if (print_table) std::cout << category_report_table(report);
    std::cout << "evaluated " << scores.size() << " pairs -> " << out_path << "\n";
    return 0;
}

int cmd_simulate(const PipelineConfig& cfg, int iterations, const std::string& out_path) {
    SimulationResult sim = simulate_loop(cfg, iterations);
    nlohmann::ordered_json j;
    j["expected_quality"] = sim.expected_quality;
    j["policies"] = sim.policies;
    nlohmann::ordered_json iters = nlohmann::ordered_json::array();
    for (const IterationResult& it : sim.iterations) {
        iters.push_back({{"iteration", it.plan.iteration},
                         {"pairs", it.pairs.size()},
                         {"parse_error_pairs", it.parse_error_pairs},
                         {"rho", it.selected_rho},
                         {"dataset", it.dataset_path.string()}});
    }
    j["iterations"] = std::move(iters);
    if (!out_path.empty()) write_json_file(out_path, j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_score_validation(const PipelineConfig& cfg, const std::string& instructions_path) {
    auto corpus = load_instructions(instructions_path);
    ValidationScore score = score_validation(cfg, corpus);
    nlohmann::ordered_json j;
    j["mean_score"] = score.mean_score;
    j["scored"] = score.scored;
    j["unscored"] = score.unscored;
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"preference-data pipeline: sample thought+response candidates, judge them, "
                 "build chosen/rejected pairs, emit iteration datasets"};
    app.require_subcommand(1);

    std::string config_path;
    std::string instructions_path, candidates_path, scored_path, a_path, b_path;
    std::string out_path, report_path, battle_log, style = "graded";
    int iteration = 0, iterations = 4;
    std::optional<size_t> begin, end;
    std::optional<uint64_t> order_seed;
    std::optional<int> timeout_ms;
    bool print_table = false;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config JSON")->required();
        cmd->add_option("--timeout-ms", timeout_ms, "request timeout override (ms)");
    };

    CLI::App* sample = app.add_subcommand("sample", "generate and parse candidates");
    add_config(sample);
    sample->add_option("--instructions", instructions_path)->required();
    sample->add_option("--out", out_path)->required();
    sample->add_option("--begin", begin, "slice begin (default 0)");
    sample->add_option("--end", end, "slice end (default corpus size)");

    CLI::App* judge = app.add_subcommand("judge", "score candidates with the configured judge");
    add_config(judge);
    judge->add_option("--candidates", candidates_path)->required();
    judge->add_option("--out", out_path)->required();
    judge->add_option("--battle-log", battle_log, "CSV battle log (pairwise judge only)");

    CLI::App* build = app.add_subcommand("build-pairs", "length-control, pair, inject, emit");
    add_config(build);
    build->add_option("--scored", scored_path)->required();
    build->add_option("--out", out_path)->required();
    build->add_option("--report", report_path, "scoring report JSON");
    build->add_option("--iteration", iteration);

    CLI::App* iterate = app.add_subcommand("iterate", "run one full training-data iteration");
    add_config(iterate);
    iterate->add_option("--instructions", instructions_path)->required();
    iterate->add_option("--iteration", iteration)->required();

    CLI::App* evaluate = app.add_subcommand("evaluate", "fine-grained A/B evaluation by category");
    add_config(evaluate);
    evaluate->add_option("--instructions", instructions_path)->required();
    evaluate->add_option("--responses-a", a_path)->required();
    evaluate->add_option("--responses-b", b_path)->required();
    evaluate->add_option("--out", out_path)->required();
    evaluate->add_option("--style", style,
                         "graded (one seeded order), graded-both, or binary (both orders)");
    evaluate->add_option("--order-seed", order_seed);
    evaluate->add_flag("--table", print_table, "print the report table to stdout");

    CLI::App* simulate = app.add_subcommand("simulate", "closed-loop mock policy simulation");
    add_config(simulate);
    simulate->add_option("--iterations", iterations);
    simulate->add_option("--out", out_path, "trace JSON");

    CLI::App* validate = app.add_subcommand("score-validation", "mean judge score on the validation slice");
    add_config(validate);
    validate->add_option("--instructions", instructions_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        prefgen::PipelineConfig cfg = prefgen::load_config(config_path);
        if (timeout_ms) {
            cfg.generation.timeout_ms = *timeout_ms;
            cfg.judge.timeout_ms = *timeout_ms;
        }
        if (sample->parsed()) return cmd_sample(cfg, instructions_path, out_path, begin, end);
        if (judge->parsed()) return cmd_judge(cfg, candidates_path, out_path, battle_log);
        if (build->parsed()) return cmd_build_pairs(cfg, scored_path, out_path, report_path, iteration);
        if (iterate->parsed()) return cmd_iterate(cfg, instructions_path, iteration);
        if (evaluate->parsed())
            return cmd_evaluate(cfg, instructions_path, a_path, b_path, out_path, style, order_seed,
                                print_table);
        if (simulate->parsed()) return cmd_simulate(cfg, iterations, out_path);
        if (validate->parsed()) return cmd_score_validation(cfg, instructions_path);
    } catch (const prefgen::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const prefgen::BackendExhausted& e) {
        std::cerr << "backend exhausted: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
