// Command-line driver: teach / recall / grade / report / compare /
// code-trace / inspect over a memory store, with provider selection and a
// JSON config file plus environment overrides.
#include <CLI11.hpp>

#include <dualtrace/code_trace.hpp>
#include <dualtrace/config.hpp>
#include <dualtrace/encode.hpp>
#include <dualtrace/errors.hpp>
#include <dualtrace/gate.hpp>
#include <dualtrace/harness.hpp>
#include <dualtrace/provider.hpp>
#include <dualtrace/report.hpp>
#include <dualtrace/retrieve.hpp>
#include <dualtrace/store.hpp>
#include <dualtrace/trace.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace dualtrace;

// Options shared by the commands that open a store and talk to a provider.
// Sentinels mean "not set on the command line": the config file (and its
// defaults) win unless the flag was passed.
struct SharedOpts {
    std::string config_file;
    std::string provider;
    std::string condition;
    std::string store;
    int parallel = 0;
    long long seed = -1;
    long long stall_window_ms = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file");
        cmd->add_option("--provider", provider, "Backend: mock or http")
            ->check(CLI::IsMember({"mock", "http"}));
        cmd->add_option("--store", store, "Memory store directory");
        cmd->add_option("--seed", seed, "Root seed for all randomness");
    }

    cli::Config resolve() const {
        auto config = cli::load_config(
            config_file.empty() ? std::nullopt
                                : std::optional<std::filesystem::path>(config_file));
        if (!provider.empty()) config.provider = provider;
        if (!condition.empty()) config.condition = condition;
        if (!store.empty()) config.store_dir = store;
        if (parallel > 0) config.parallel = parallel;
        if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
        if (stall_window_ms > 0) config.stall_window_ms = stall_window_ms;
        return config;
    }
};

std::unique_ptr<provider::Provider> make_provider(const cli::Config& config,
                                                  provider::MockProvider::Mode mock_mode) {
    if (config.provider == "mock") return std::make_unique<provider::MockProvider>(mock_mode);
    if (config.base_url.empty() || config.model.empty())
        throw ValidationError("http provider needs base_url and model (config file or "
                              "DUALTRACE_BASE_URL / DUALTRACE_MODEL)");
    if (config.api_key.empty())
        throw ValidationError("http provider needs an api key in DUALTRACE_API_KEY");
    provider::HttpConfig http;
    http.base_url = config.base_url;
    http.model = config.model;
    http.api_key = config.api_key;
    http.call_timeout_seconds = config.call_timeout_seconds;
    http.max_retries = config.max_retries;
    return std::make_unique<provider::HttpProvider>(http);
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out.good()) throw StoreError("cannot write '" + out_path + "'");
    out << text;
}

// --- teach ------------------------------------------------------------------

struct TeachOpts {
    SharedOpts shared;
    std::string benchmark;
    std::string checkpoint = "teach_checkpoint.json";
    std::string ledger = "teach_ledger.jsonl";
};

int run_teach_cmd(const TeachOpts& opts) {
    const auto config = opts.shared.resolve();
    const auto bench = harness::load_benchmark(opts.benchmark);
    std::cerr << "loaded " << bench.sessions.size() << " sessions, " << bench.cases.size()
              << " cases\n";

    auto store = store::MemoryStore::open(config.store_dir);
    harness::TeachConfig teach;
    teach.condition = cli::condition_from_name(config.condition);
    teach.condition_name = config.condition;
    teach.parallel = config.parallel;
    teach.stall_window = std::chrono::milliseconds(config.stall_window_ms);
    teach.seed = config.seed;
    teach.config_echo = cli::config_echo(config);

    harness::TeachResult result;
    auto backend = make_provider(config, provider::MockProvider::Mode::Echo);
    if (config.provider == "mock") {
        gate::FixtureScorer scorer;
        encode::MockTraceGenerator generator(*backend);
        result = harness::run_teach(bench.sessions, teach, store, scorer, generator,
                                    opts.checkpoint, opts.ledger);
    } else {
        gate::ModelScorer scorer(*backend, config.max_retries);
        encode::ModelTraceGenerator generator(*backend, config.max_retries);
        result = harness::run_teach(bench.sessions, teach, store, scorer, generator,
                                    opts.checkpoint, opts.ledger);
    }

    std::cout << "condition " << config.condition << ": " << result.completed << " completed ("
              << result.reused << " reused), " << result.failed << " failed\n";
    std::cout << "coverage: " << result.coverage.sessions_stored << "/"
              << result.coverage.sessions_processed << " sessions stored, dual ratio "
              << result.coverage.dual_ratio << "\n";
    std::cout << "tokens: " << result.prompt_tokens << " prompt + " << result.completion_tokens
              << " completion\n";
    std::cout << "ledger: " << opts.ledger << "\n";
    for (const auto& id : result.failed_sessions)
        std::cerr << "warning: session '" << id << "' failed; re-run to retry\n";
    return 0;
}

// --- recall -----------------------------------------------------------------

struct RecallOpts {
    SharedOpts shared;
    std::string cases;
    std::string out = "answers.jsonl";
    std::size_t k = 10;
};

int run_recall_cmd(const RecallOpts& opts) {
    const auto config = opts.shared.resolve();
    const auto bench = harness::load_benchmark(opts.cases);
    const auto store = store::MemoryStore::open(config.store_dir);
    auto backend = make_provider(config, provider::MockProvider::Mode::Recall);

    const auto answers =
        harness::run_recall(bench.cases, store, *backend, opts.k, config.parallel);
    harness::write_answers(opts.out, answers);

    std::size_t failed = 0;
    for (const auto& record : answers) failed += record.failed ? 1 : 0;
    std::cout << "answered " << (answers.size() - failed) << "/" << answers.size()
              << " questions -> " << opts.out << "\n";
    if (failed) std::cerr << "warning: " << failed << " question(s) failed; see the error field\n";
    return 0;
}

// --- grade ------------------------------------------------------------------

struct GradeOpts {
    SharedOpts shared;
    std::string answers;
    std::string judge = "deterministic";
    std::string out = "grades.jsonl";
};

int run_grade_cmd(const GradeOpts& opts) {
    const auto answers = harness::read_answers(opts.answers);
    harness::GradeReport report;
    if (opts.judge == "deterministic") {
        harness::DeterministicJudge judge;
        report = harness::grade_answers(answers, judge);
    } else {
        const auto config = opts.shared.resolve();
        auto backend = make_provider(config, provider::MockProvider::Mode::Echo);
        harness::ModelJudge judge(*backend, config.max_retries);
        report = harness::grade_answers(answers, judge);
    }
    harness::write_grades(opts.out, report.grades);

    std::size_t correct = 0;
    for (const auto& grade : report.grades) correct += grade.correct ? 1 : 0;
    std::cout << "graded " << report.grades.size() << " answers (" << correct << " correct) -> "
              << opts.out << "\n";
    for (const auto& flagged : report.flagged)
        std::cerr << "warning: '" << flagged.question_id << "' ungraded: " << flagged.reason
                  << "\n";
    return 0;
}

// --- report / compare -------------------------------------------------------

struct ReportOpts {
    std::string grades;
    std::string compare_grades;
    std::string label_a = "A";
    std::string label_b = "B";
    std::string out = "-";
    std::size_t resamples = 10000;
    long long seed = 42;
    bool as_json = false;
};

int run_report_cmd(const ReportOpts& opts) {
    const auto grades_a = harness::read_grades(opts.grades);
    if (opts.compare_grades.empty()) {
        const auto table = harness::accuracy_from_grades(grades_a);
        emit(opts.out, opts.as_json ? report::render_accuracy_json(table, opts.label_a)
                                    : report::render_accuracy_markdown(table, opts.label_a));
        return 0;
    }
    const auto grades_b = harness::read_grades(opts.compare_grades);
    const auto comparison =
        report::compare_grades(grades_a, grades_b, opts.label_a, opts.label_b, opts.resamples,
                               static_cast<std::uint64_t>(opts.seed));
    emit(opts.out, opts.as_json ? report::render_json(comparison)
                                : report::render_markdown(comparison));
    return 0;
}

// --- code-trace -------------------------------------------------------------

struct CodeAddOpts {
    SharedOpts shared;
    std::string kind;
    std::string score_csv;
    std::string session = "cli";
    std::string topic;
    std::string category = "code";
    std::string date;
    std::string body;
    std::string prior;
    std::string after;
    std::vector<std::string> facts;
    std::vector<std::string> artifacts;
    std::vector<std::string> timeline;
};

code_trace::CodeEvidenceScore parse_score(const std::string& csv) {
    int values[4];
    char extra = 0;
    if (std::sscanf(csv.c_str(), "%d,%d,%d,%d%c", &values[0], &values[1], &values[2], &values[3],
                    &extra) != 4)
        throw ValidationError("--score must be four comma-separated integers, e.g. 3,2,3,2");
    code_trace::CodeEvidenceScore score;
    score.durability = values[0];
    score.scope = values[1];
    score.rationale_richness = values[2];
    score.retrieval_likelihood = values[3];
    return score;
}

int run_code_add_cmd(const CodeAddOpts& opts) {
    const auto config = opts.shared.resolve();
    const auto kind = code_trace::code_info_type_from_string(opts.kind);
    if (!kind) throw ValidationError("unknown --kind '" + opts.kind + "'");
    const auto date = UtcTimestamp::parse(opts.date);
    if (!date) throw ValidationError("--date must be an ISO-8601 UTC timestamp");

    code_trace::CodeKnowledgeItem item;
    item.kind = *kind;
    item.topic = opts.topic;
    item.category = opts.category;
    item.facts = opts.facts;
    item.artifacts = opts.artifacts;
    item.scene.body = opts.body;
    item.scene.timeline = opts.timeline;
    item.scene.prior = opts.prior;
    item.scene.after = opts.after;
    item.timestamp = *date;

    auto store = store::MemoryStore::open(config.store_dir);
    const auto outcome =
        code_trace::encode_code_knowledge(item, parse_score(opts.score_csv), store, opts.session);
    std::cout << "tier " << code_trace::to_string(outcome.tier);
    if (outcome.anchor)
        std::cout << ", anchor " << outcome.anchor->str()
                  << (outcome.updated ? " (updated in place)" : " (new)");
    std::cout << "\n";
    return 0;
}

// --- inspect ----------------------------------------------------------------

struct InspectOpts {
    SharedOpts shared;
    std::string anchor;
};

int run_inspect_cmd(const InspectOpts& opts) {
    const auto config = opts.shared.resolve();
    const auto store = store::MemoryStore::open(config.store_dir);

    std::optional<store::MemoryStore::Pair> pair;
    try {
        pair = store.get_by_anchor(Anchor(opts.anchor));
    } catch (const IntegrityError& error) {
        std::cout << "integrity error: " << error.what() << "\n";
        return 1;
    }
    if (!pair) {
        std::cerr << "error: anchor '" << opts.anchor << "' not found\n";
        return 1;
    }
    std::cout << serialize_entry(pair->fact.entry);
    if (pair->scene) std::cout << "\n" << serialize_entry(pair->scene->entry);

    // Whole-store audit, filtered to findings that mention this anchor.
    std::vector<std::string> findings;
    for (const auto& finding : store.audit())
        if (finding.find("'" + opts.anchor + "'") != std::string::npos)
            findings.push_back(finding);
    if (findings.empty()) {
        std::cout << "\nlinks: valid\n";
        return 0;
    }
    for (const auto& finding : findings) std::cout << "\nlink issue: " << finding;
    std::cout << "\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-trace episodic memory engine"};
    app.require_subcommand(1);

    TeachOpts teach;
    auto* teach_cmd = app.add_subcommand("teach", "Encode benchmark sessions into a store");
    teach.shared.attach(teach_cmd);
    teach_cmd->add_option("--benchmark", teach.benchmark, "Benchmark JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    teach_cmd->add_option("--condition", teach.shared.condition, "c6 | c7 | c4")
        ->check(CLI::IsMember({"c6", "c7", "c4"}));
    teach_cmd->add_option("--checkpoint", teach.checkpoint, "Checkpoint file for resume");
    teach_cmd->add_option("--ledger", teach.ledger, "Run ledger (JSONL) output");
    teach_cmd->add_option("--parallel", teach.shared.parallel, "Worker width")
        ->check(CLI::PositiveNumber);
    teach_cmd->add_option("--stall-window-ms", teach.shared.stall_window_ms,
                          "Per-session stall watchdog window");

    RecallOpts recall;
    auto* recall_cmd = app.add_subcommand("recall", "Answer benchmark questions from a store");
    recall.shared.attach(recall_cmd);
    recall_cmd->add_option("--cases", recall.cases, "Benchmark JSON file with the questions")
        ->required()
        ->check(CLI::ExistingFile);
    recall_cmd->add_option("--out", recall.out, "Answers JSONL output");
    recall_cmd->add_option("-k,--top-k", recall.k, "Search depth");
    recall_cmd->add_option("--parallel", recall.shared.parallel, "Worker width")
        ->check(CLI::PositiveNumber);

    GradeOpts grade;
    auto* grade_cmd = app.add_subcommand("grade", "Judge an answers file");
    grade.shared.attach(grade_cmd);
    grade_cmd->add_option("--answers", grade.answers, "Answers JSONL file")
        ->required()
        ->check(CLI::ExistingFile);
    grade_cmd->add_option("--judge", grade.judge, "deterministic | model")
        ->check(CLI::IsMember({"deterministic", "model"}));
    grade_cmd->add_option("--out", grade.out, "Grades JSONL output");

    ReportOpts report_opts;
    auto* report_cmd = app.add_subcommand("report", "Accuracy report for one grades file");
    report_cmd->add_option("--grades", report_opts.grades, "Grades JSONL file")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--compare", report_opts.compare_grades,
                           "Second grades file: emit the paired comparison instead")
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--label-a", report_opts.label_a, "Label for the first condition");
    report_cmd->add_option("--label-b", report_opts.label_b, "Label for the second condition");
    report_cmd->add_option("--out", report_opts.out, "Output file ('-' for stdout)");
    report_cmd->add_option("--resamples", report_opts.resamples, "Bootstrap resamples");
    report_cmd->add_option("--seed", report_opts.seed, "Bootstrap seed");
    report_cmd->add_flag("--json", report_opts.as_json, "Emit JSON instead of markdown");

    ReportOpts compare_opts;
    auto* compare_cmd =
        app.add_subcommand("compare", "Paired comparison of two grades files");
    compare_cmd->add_option("grades_a", compare_opts.grades, "First grades JSONL file")
        ->required()
        ->check(CLI::ExistingFile);
    compare_cmd->add_option("grades_b", compare_opts.compare_grades, "Second grades JSONL file")
        ->required()
        ->check(CLI::ExistingFile);
    compare_cmd->add_option("--label-a", compare_opts.label_a, "Label for the first condition");
    compare_cmd->add_option("--label-b", compare_opts.label_b, "Label for the second condition");
    compare_cmd->add_option("--out", compare_opts.out, "Output file ('-' for stdout)");
    compare_cmd->add_option("--resamples", compare_opts.resamples, "Bootstrap resamples");
    compare_cmd->add_option("--seed", compare_opts.seed, "Bootstrap seed");
    compare_cmd->add_flag("--json", compare_opts.as_json, "Emit JSON instead of markdown");

    auto* code_cmd = app.add_subcommand("code-trace", "Coding-agent memory operations");
    code_cmd->require_subcommand(1);
    CodeAddOpts code_add;
    auto* code_add_cmd = code_cmd->add_subcommand("add", "Score and store one knowledge item");
    code_add.shared.attach(code_add_cmd);
    code_add_cmd->add_option("--kind", code_add.kind,
                             "decision | incident | convention | pattern | "
                             "learning_progression | preference")
        ->required();
    code_add_cmd->add_option("--score", code_add.score_csv,
                             "durability,scope,rationale,retrieval (each 0-3)")
        ->required();
    code_add_cmd->add_option("--session", code_add.session, "Session id recorded with the entry");
    code_add_cmd->add_option("--topic", code_add.topic, "Anchor phrase");
    code_add_cmd->add_option("--category", code_add.category, "Frontmatter category");
    code_add_cmd->add_option("--date", code_add.date, "ISO-8601 UTC timestamp")->required();
    code_add_cmd->add_option("--fact", code_add.facts, "Fact component (repeatable)")
        ->required();
    code_add_cmd->add_option("--artifact", code_add.artifacts,
                             "Code artifact reference (repeatable)");
    code_add_cmd->add_option("--body", code_add.body, "Scene narrative (FULL tier)");
    code_add_cmd->add_option("--timeline", code_add.timeline, "Timeline event (repeatable)");
    code_add_cmd->add_option("--prior", code_add.prior, "State before");
    code_add_cmd->add_option("--after", code_add.after, "State after");

    InspectOpts inspect;
    auto* inspect_cmd = app.add_subcommand("inspect", "Pretty-print a pair and audit its links");
    inspect.shared.attach(inspect_cmd);
    inspect_cmd->add_option("anchor", inspect.anchor, "Anchor slug")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (teach_cmd->parsed()) return run_teach_cmd(teach);
        if (recall_cmd->parsed()) return run_recall_cmd(recall);
        if (grade_cmd->parsed()) return run_grade_cmd(grade);
        if (report_cmd->parsed()) return run_report_cmd(report_opts);
        if (compare_cmd->parsed()) return run_report_cmd(compare_opts);
        if (code_cmd->parsed() && code_add_cmd->parsed()) return run_code_add_cmd(code_add);
        if (inspect_cmd->parsed()) return run_inspect_cmd(inspect);
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    }
    return 0;
}
