#include <doctest.h>

#include <dualtrace/encode.hpp>
#include <dualtrace/errors.hpp>
#include <dualtrace/gate.hpp>
#include <dualtrace/harness.hpp>
#include <dualtrace/provider.hpp>
#include <dualtrace/retrieve.hpp>
#include <dualtrace/store.hpp>
#include <dualtrace/trace.hpp>

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "scripted_provider.hpp"
#include "temp_dir.hpp"

using namespace dualtrace;

namespace {

const std::filesystem::path kBenchmarkPath =
    std::filesystem::path(DUALTRACE_DATA_DIR) / "synthetic_benchmark.json";
const std::filesystem::path kExternalSamplePath =
    std::filesystem::path(DUALTRACE_TEST_DATA_DIR) / "longmemeval_sample.json";

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<std::string> file_lines(const std::filesystem::path& path) {
    std::istringstream in(slurp(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

harness::TeachConfig teach_config(const std::string& name) {
    harness::TeachConfig config;
    if (name == "c6")
        config.condition = encode::ConditionConfig::c6();
    else if (name == "c7")
        config.condition = encode::ConditionConfig::c7();
    else
        config.condition = encode::ConditionConfig::c4();
    config.condition_name = name;
    return config;
}

struct TeachRun {
    testutil::TempDir dir;
    provider::MockProvider backend{provider::MockProvider::Mode::Echo};
    gate::FixtureScorer scorer;
    encode::MockTraceGenerator generator{backend};

    explicit TeachRun(const std::string& tag) : dir(tag) {}

    std::filesystem::path store_dir() const { return dir / "store"; }
    std::filesystem::path checkpoint() const { return dir / "checkpoint.json"; }
    std::filesystem::path ledger() const { return dir / "teach.jsonl"; }
};

/// Forwards to an inner generator until `budget` calls have happened, then
/// simulates a provider outage that survived its retries.
struct TripwireGenerator : encode::TraceGenerator {
    encode::TraceGenerator& inner;
    int budget;
    int seen = 0;

    TripwireGenerator(encode::TraceGenerator& inner, int budget) : inner(inner), budget(budget) {}

    encode::GeneratedTraces generate(const SessionTranscript& session, bool want_scene) override {
        if (++seen > budget) throw ProviderError("injected outage", false);
        return inner.generate(session, want_scene);
    }
};

harness::AnswerRecord make_answer(const std::string& id, harness::QuestionType type,
                                  const std::string& question, const std::string& oracle,
                                  const std::string& answer) {
    harness::AnswerRecord record;
    record.question_id = id;
    record.question_type = type;
    record.question = question;
    record.oracle_answer = oracle;
    record.state = "A";
    record.confidence = "High";
    record.answer = answer;
    return record;
}

/// 100-question benchmark shaped like the published evaluation: 20 questions
/// per category with abstention pooled as its own category.
std::vector<harness::BenchmarkCase> reference_cases() {
    const std::vector<harness::QuestionType> types = {
        harness::QuestionType::SingleSession, harness::QuestionType::MultiSession,
        harness::QuestionType::KnowledgeUpdate, harness::QuestionType::Temporal,
        harness::QuestionType::Abstention};
    std::vector<harness::BenchmarkCase> cases;
    for (const auto type : types) {
        for (int i = 0; i < 20; ++i) {
            harness::BenchmarkCase item;
            item.question_id = std::string(harness::to_string(type)) + "_" + std::to_string(i);
            item.question_type = type;
            item.question = "q";
            item.oracle_answer = "a";
            cases.push_back(std::move(item));
        }
    }
    return cases;
}

/// Grades the first `correct` questions of each category as correct, the
/// rest wrong, skipping any ids in `ungraded` entirely.
std::vector<harness::GradedAnswer> reference_grades(
    const std::vector<harness::BenchmarkCase>& cases,
    const std::map<std::string, int>& correct_per_category,
    const std::set<std::string>& ungraded = {}) {
    std::map<std::string, int> seen;
    std::vector<harness::GradedAnswer> grades;
    for (const auto& item : cases) {
        if (ungraded.count(item.question_id)) continue;
        const std::string category(harness::to_string(item.question_type));
        harness::GradedAnswer grade;
        grade.question_id = item.question_id;
        grade.category = category;
        grade.correct = seen[category]++ < correct_per_category.at(category);
        grade.judge_rationale = "fixture";
        grades.push_back(std::move(grade));
    }
    return grades;
}

double round1(double value) { return std::round(value * 10.0) / 10.0; }

} // namespace

TEST_SUITE_BEGIN("eval_harness");

TEST_CASE("native benchmark file loads sessions, annotations, and typed cases") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    CHECK(bench.sessions.size() == 12);
    CHECK(bench.cases.size() == 8);

    const auto& first = bench.sessions.front();
    CHECK(first.id == "s001");
    CHECK(first.date.to_string() == "2023-03-04T10:00:00Z");
    CHECK(first.messages.size() == 3);
    REQUIRE(first.annotations.has_value());
    CHECK(first.annotations->relevance == 2);
    CHECK(first.annotations->topic == "Car Maintenance (March)");
    CHECK(first.annotations->facts.size() == 3);

    CHECK(bench.cases[4].question_id == "q5");
    CHECK(bench.cases[4].question_type == harness::QuestionType::Temporal);
    CHECK(bench.cases[6].question_type == harness::QuestionType::Abstention);
    CHECK(bench.cases[3].evidence_session_ids ==
          std::vector<std::string>{"s005", "s012"});
}

TEST_CASE("tiny benchmark with one case per type reports its counts") {
    testutil::TempDir dir("bench_tiny");
    nlohmann::ordered_json root;
    root["sessions"] = nlohmann::ordered_json::array();
    for (int i = 0; i < 6; ++i) {
        nlohmann::ordered_json s;
        s["id"] = "t" + std::to_string(i);
        s["date"] = "2023-01-0" + std::to_string(i + 1) + "T08:00:00Z";
        s["messages"] = {{{"role", "user"}, {"content", "hello"}}};
        root["sessions"].push_back(s);
    }
    root["cases"] = nlohmann::ordered_json::array();
    const char* types[] = {"single_session", "multi_session", "knowledge_update", "temporal",
                           "abstention"};
    for (int i = 0; i < 5; ++i) {
        nlohmann::ordered_json c;
        c["question_id"] = "q" + std::to_string(i);
        c["question_type"] = types[i];
        c["question"] = "q?";
        c["oracle_answer"] = "a";
        root["cases"].push_back(c);
    }
    const auto path = dir / "tiny.json";
    std::ofstream(path) << root.dump(2);

    const auto bench = harness::load_benchmark(path);
    CHECK(bench.sessions.size() == 6);
    CHECK(bench.cases.size() == 5);
}

TEST_CASE("external distribution shape adapts: types mapped, haystacks deduplicated") {
    const auto bench = harness::load_benchmark(kExternalSamplePath);

    REQUIRE(bench.cases.size() == 3);
    CHECK(bench.cases[0].question_type == harness::QuestionType::SingleSession);
    CHECK(bench.cases[1].question_type == harness::QuestionType::Temporal);
    // `_abs` ids pool into abstention no matter the surface type.
    CHECK(bench.cases[2].question_id == "lme_003_abs");
    CHECK(bench.cases[2].question_type == harness::QuestionType::Abstention);
    CHECK(bench.cases[0].oracle_answer == "forest green");
    CHECK(bench.cases[1].evidence_session_ids ==
          std::vector<std::string>{"answer_a1", "answer_a2"});

    // answer_a1 and noise_n1 appear in two haystacks each; loaded once.
    REQUIRE(bench.sessions.size() == 3);
    CHECK(bench.sessions[0].id == "answer_a1");
    CHECK(bench.sessions[0].date.to_string() == "2023-05-20T02:21:00Z");
    CHECK(bench.sessions[0].messages.size() == 2);
    CHECK_FALSE(bench.sessions[0].annotations.has_value());
    CHECK(bench.sessions[1].id == "noise_n1");
    CHECK(bench.sessions[2].id == "answer_a2");
}

TEST_CASE("benchmark schema violations name the offending field") {
    testutil::TempDir dir("bench_schema");
    auto write = [&](const std::string& name, const std::string& text) {
        const auto path = dir / name;
        std::ofstream(path) << text;
        return path;
    };

    SUBCASE("unknown question type") {
        const auto path = write("bad_type.json", R"({"sessions":[],"cases":[
            {"question_id":"q0","question_type":"essay","question":"?","oracle_answer":"a"}]})");
        CHECK_THROWS_WITH_AS(harness::load_benchmark(path),
                             doctest::Contains("unknown question_type 'essay'"), SchemaError);
    }
    SUBCASE("session missing its date") {
        const auto path =
            write("no_date.json", R"({"sessions":[{"id":"s1","messages":[]}],"cases":[]})");
        CHECK_THROWS_WITH_AS(harness::load_benchmark(path), doctest::Contains("'date'"),
                             SchemaError);
    }
    SUBCASE("case missing its question") {
        const auto path = write("no_question.json", R"({"sessions":[],"cases":[
            {"question_id":"q0","question_type":"temporal","oracle_answer":"a"}]})");
        CHECK_THROWS_WITH_AS(harness::load_benchmark(path), doctest::Contains("'question'"),
                             SchemaError);
    }
    SUBCASE("duplicate session ids rejected") {
        const auto path = write("dup.json", R"({"sessions":[
            {"id":"s1","date":"2023-01-01T00:00:00Z","messages":[]},
            {"id":"s1","date":"2023-01-02T00:00:00Z","messages":[]}],"cases":[]})");
        CHECK_THROWS_WITH_AS(harness::load_benchmark(path), doctest::Contains("duplicate"),
                             SchemaError);
    }
    SUBCASE("top-level scalar is not a benchmark") {
        const auto path = write("scalar.json", R"("just a string")");
        CHECK_THROWS_AS(harness::load_benchmark(path), SchemaError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(harness::load_benchmark(dir / "absent.json"), StoreError);
    }
}

TEST_CASE("teach run under the dual-trace condition covers the fixture hand counts") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("teach_c6");
    auto store = store::MemoryStore::open(run.store_dir());

    const auto result = harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer,
                                           run.generator, run.checkpoint(), run.ledger());

    CHECK(result.completed == 12);
    CHECK(result.failed == 0);
    CHECK(result.reused == 0);
    // Hand count: s004, s006, s009, s011 score <= 2 and drop; the other 8 store.
    CHECK(result.coverage.sessions_processed == 12);
    CHECK(result.coverage.sessions_stored == 8);
    CHECK(result.coverage.coverage_ratio == doctest::Approx(8.0 / 12.0));
    CHECK(result.coverage.dual_ratio == doctest::Approx(1.0));

    // Every stored session produced a full pair with its scene cross-linked.
    for (const char* anchor :
         {"car_maintenance_march", "charity_race_result", "sourdough_starter",
          "harbor_analytics_job_offer", "model_train_project", "kayak_restoration_project",
          "passport_renewal_deadline", "job_title_update"}) {
        const auto pair = store.get_by_anchor(Anchor(anchor));
        REQUIRE_MESSAGE(pair.has_value(), anchor);
        CHECK_MESSAGE(pair->scene.has_value(), anchor);
    }
    CHECK_FALSE(store.contains(Anchor("weather_small_talk")));
    CHECK(store.session_processed("s004"));
    CHECK(store.audit().empty());

    // Ledger: one config line, one line per session in order, one summary.
    const auto lines = file_lines(run.ledger());
    REQUIRE(lines.size() == 14);
    const auto header = nlohmann::ordered_json::parse(lines.front());
    CHECK(header.at("type") == "config");
    CHECK(header.at("condition") == "c6");
    CHECK(header.at("trace_mode") == "dual_trace");
    CHECK(header.at("seed") == 42);
    for (std::size_t i = 0; i < 12; ++i) {
        const auto line = nlohmann::ordered_json::parse(lines[i + 1]);
        CHECK(line.at("session_id") == bench.sessions[i].id);
        CHECK(line.at("status") == "completed");
    }
    const auto s4 = nlohmann::ordered_json::parse(lines[4]);
    CHECK(s4.at("outcome") == "dropped");
    CHECK(s4.at("tier") == "DROP");
    CHECK(s4.at("prompt_tokens") == 0);
    const auto summary = nlohmann::ordered_json::parse(lines.back());
    CHECK(summary.at("type") == "summary");
    CHECK(summary.at("sessions_stored") == 8);

    // Token totals in the result equal the mock's own per-call accounting.
    CHECK(result.prompt_tokens == run.backend.total_prompt_tokens());
    CHECK(result.completion_tokens == run.backend.total_completion_tokens());
    CHECK(result.prompt_tokens > 0);

    // Checkpoint reflects the finished run.
    const auto checkpoint = harness::load_checkpoint(run.checkpoint());
    CHECK(checkpoint.last_completed_session == "s012");
    CHECK(checkpoint.completed.size() == 12);
    CHECK(checkpoint.failed.empty());
    CHECK(checkpoint.ledger == run.ledger().string());
}

TEST_CASE("teach run under the fact-only condition stores no scenes") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("teach_c7");
    auto store = store::MemoryStore::open(run.store_dir());

    const auto result = harness::run_teach(bench.sessions, teach_config("c7"), store, run.scorer,
                                           run.generator, run.checkpoint(), run.ledger());

    CHECK(result.coverage.sessions_stored == 8);
    CHECK(result.coverage.dual_ratio == doctest::Approx(0.0));
    for (const auto& record : store.records()) CHECK(record.entry.kind == TraceKind::Fact);
    const auto pair = store.get_by_anchor(Anchor("car_maintenance_march"));
    REQUIRE(pair.has_value());
    CHECK_FALSE(pair->scene.has_value());
    CHECK_FALSE(pair->fact.entry.frontmatter.linked_scene.has_value());
}

TEST_CASE("re-running a finished teach is a no-op with an identical ledger") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("teach_rerun");
    auto store = store::MemoryStore::open(run.store_dir());

    harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer, run.generator,
                       run.checkpoint(), run.ledger());
    const auto first_ledger = slurp(run.ledger());
    const int calls_after_first = run.backend.calls();

    const auto again = harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer,
                                          run.generator, run.checkpoint(), run.ledger());
    CHECK(again.completed == 12);
    CHECK(again.reused == 12);
    CHECK(run.backend.calls() == calls_after_first); // nothing re-encoded
    CHECK(slurp(run.ledger()) == first_ledger);
    CHECK(store.records().size() == 16); // 8 pairs, not duplicated
}

TEST_CASE("interrupted teach resumes into a byte-identical ledger") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);

    // Baseline: one uninterrupted run.
    TeachRun baseline("teach_base");
    auto baseline_store = store::MemoryStore::open(baseline.store_dir());
    harness::run_teach(bench.sessions, teach_config("c6"), baseline_store, baseline.scorer,
                       baseline.generator, baseline.checkpoint(), baseline.ledger());
    const auto baseline_ledger = slurp(baseline.ledger());

    // Interrupted: the generator survives three calls, then the provider is
    // declared down. Generator calls happen only for non-drop sessions, so
    // s001..s003 encode, s004 drops, and s005 trips the outage.
    TeachRun run("teach_resume");
    auto store = store::MemoryStore::open(run.store_dir());
    {
        TripwireGenerator failing(run.generator, 3);
        CHECK_THROWS_AS(harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer,
                                           failing, run.checkpoint(), run.ledger()),
                        ProviderError);
    }
    const auto checkpoint = harness::load_checkpoint(run.checkpoint());
    CHECK(checkpoint.last_completed_session == "s004");
    CHECK(checkpoint.completed == std::vector<std::string>{"s001", "s002", "s003", "s004"});
    CHECK_FALSE(store.session_processed("s005"));
    CHECK(store.session_processed("s003"));

    // Resume with a healthy generator: only the remaining non-drop sessions
    // hit the backend (s005, s007, s008, s010, s012).
    const int calls_before = run.backend.calls();
    const auto resumed = harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer,
                                            run.generator, run.checkpoint(), run.ledger());
    CHECK(resumed.completed == 12);
    CHECK(resumed.reused == 4);
    CHECK(run.backend.calls() - calls_before == 5);
    CHECK(slurp(run.ledger()) == baseline_ledger);
    CHECK(store.audit().empty());
}

TEST_CASE("a stalled session is marked failed and the run continues") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("teach_stall");
    auto store = store::MemoryStore::open(run.store_dir());
    // s003's transcript is the only one mentioning sourdough.
    run.backend.stall_on("sourdough", std::chrono::milliseconds(400));
    auto config = teach_config("c6");
    config.stall_window = std::chrono::milliseconds(60);

    const auto result = harness::run_teach(bench.sessions, config, store, run.scorer,
                                           run.generator, run.checkpoint(), run.ledger());

    CHECK(result.completed == 11);
    CHECK(result.failed == 1);
    CHECK(result.failed_sessions == std::vector<std::string>{"s003"});
    CHECK_FALSE(store.session_processed("s003"));
    CHECK_FALSE(store.contains(Anchor("sourdough_starter")));
    CHECK(result.coverage.sessions_processed == 11);
    CHECK(result.coverage.sessions_stored == 7);

    bool found = false;
    for (const auto& text : file_lines(run.ledger())) {
        const auto line = nlohmann::ordered_json::parse(text);
        if (line.value("session_id", "") != "s003") continue;
        found = true;
        CHECK(line.at("status") == "failed");
        CHECK_MESSAGE(line.at("error").get<std::string>().find("stall") != std::string::npos,
                      line.dump());
    }
    CHECK(found);
    CHECK(harness::load_checkpoint(run.checkpoint()).failed ==
          std::vector<std::string>{"s003"});

    // The cancelled worker never mutated the store; a later clean run can
    // still encode the session.
    const auto retry = harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer,
                                          run.generator, run.checkpoint(), run.ledger());
    CHECK(retry.failed == 0);
    CHECK(store.contains(Anchor("sourdough_starter")));
}

TEST_CASE("bounded-parallel teach commits in order and matches the serial ledger") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);

    TeachRun serial("teach_serial");
    auto serial_store = store::MemoryStore::open(serial.store_dir());
    harness::run_teach(bench.sessions, teach_config("c6"), serial_store, serial.scorer,
                       serial.generator, serial.checkpoint(), serial.ledger());

    TeachRun parallel("teach_parallel");
    auto parallel_store = store::MemoryStore::open(parallel.store_dir());
    auto config = teach_config("c6");
    config.parallel = 4;
    harness::run_teach(bench.sessions, config, parallel_store, parallel.scorer,
                       parallel.generator, parallel.checkpoint(), parallel.ledger());

    // Config lines legitimately differ in the parallel field; every session
    // and summary line must be byte-identical.
    auto serial_lines = file_lines(serial.ledger());
    auto parallel_lines = file_lines(parallel.ledger());
    REQUIRE(serial_lines.size() == parallel_lines.size());
    for (std::size_t i = 1; i < serial_lines.size(); ++i)
        CHECK(serial_lines[i] == parallel_lines[i]);
    CHECK(parallel_store.audit().empty());
    CHECK(parallel.backend.total_prompt_tokens() == serial.backend.total_prompt_tokens());
}

TEST_CASE("recall over the taught store answers by protocol state") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("recall_c6");
    auto store = store::MemoryStore::open(run.store_dir());
    harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer, run.generator,
                       run.checkpoint(), run.ledger());

    provider::MockProvider recall_backend(provider::MockProvider::Mode::Recall);
    const auto answers = harness::run_recall(bench.cases, store, recall_backend);
    REQUIRE(answers.size() == 8);
    for (const auto& record : answers) CHECK_FALSE(record.failed);

    CHECK(answers[0].state == "A");
    CHECK(answers[0].answer.find("35:00") != std::string::npos);
    CHECK(answers[1].answer.find("240 dollars") != std::string::npos);
    CHECK(answers[2].anchors.size() >= 2);
    CHECK(answers[2].answer.find("model train") != std::string::npos);
    CHECK(answers[2].answer.find("cedar kayak") != std::string::npos);
    CHECK(answers[3].answer.find("senior data analyst") != std::string::npos);
    CHECK(answers[4].answer == "The earliest was the model train project on 2023-03-20.");
    CHECK(answers[5].answer.find("2023-05-10") != std::string::npos);

    // Abstention questions answer with the exact sentence and no backend call.
    for (const auto index : {6, 7}) {
        CHECK(answers[index].state == "C");
        CHECK(answers[index].answer == retrieve::kAbstention);
        CHECK(answers[index].prompt_tokens == 0);
    }
    provider::MockProvider counting(provider::MockProvider::Mode::Recall);
    const std::vector<harness::BenchmarkCase> abstention_only = {bench.cases[6], bench.cases[7]};
    harness::run_recall(abstention_only, store, counting);
    CHECK(counting.calls() == 0);

    // Judge the lot: the fixture is constructed so the dual-trace condition
    // answers everything.
    harness::DeterministicJudge judge;
    const auto report = harness::grade_answers(answers, judge);
    CHECK(report.grades.size() == 8);
    CHECK(report.flagged.empty());
    for (const auto& grade : report.grades) CHECK_MESSAGE(grade.correct, grade.question_id);
}

TEST_CASE("fact-only stores answer in state B") {
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("recall_c7");
    auto store = store::MemoryStore::open(run.store_dir());
    harness::run_teach(bench.sessions, teach_config("c7"), store, run.scorer, run.generator,
                       run.checkpoint(), run.ledger());

    provider::MockProvider recall_backend(provider::MockProvider::Mode::Recall);
    const auto answers = harness::run_recall(bench.cases, store, recall_backend);
    CHECK(answers[0].state == "B");
    CHECK(answers[0].confidence == "Medium");
    CHECK(answers[0].answer.find("35:00") != std::string::npos);
}

TEST_CASE("a failing question is recorded and the run moves on") {
    testutil::TempDir dir("recall_fail");
    {
        std::ofstream log(dir / "entries.log", std::ios::binary);
        log << serialize_entry(testutil::make_fact("lost_scene"));
    }
    {
        std::ofstream manifest(dir / "manifest.json", std::ios::binary);
        manifest << R"({"version":1,"record_count":1,"records":[{"session_id":"s001"}],)"
                 << R"("superseded":[],"sessions":[]})";
    }
    auto store = store::MemoryStore::open(dir.path());
    provider::MockProvider backend(provider::MockProvider::Mode::Recall);

    std::vector<harness::BenchmarkCase> cases(2);
    cases[0].question_id = "q_bad";
    cases[0].question_type = harness::QuestionType::SingleSession;
    cases[0].question = "what happened with the lost scene brake service?";
    cases[0].oracle_answer = "240 dollars";
    cases[1].question_id = "q_none";
    cases[1].question_type = harness::QuestionType::Abstention;
    cases[1].question = "what is my cat's name?";
    cases[1].oracle_answer = "unknown";

    const auto answers = harness::run_recall(cases, store, backend);
    REQUIRE(answers.size() == 2);
    CHECK(answers[0].failed);
    CHECK(answers[0].error.find("lost_scene") != std::string::npos);
    CHECK_FALSE(answers[1].failed);
    CHECK(answers[1].answer == retrieve::kAbstention);

    // Failed records still get judged (as incorrect), keeping the counts whole.
    harness::DeterministicJudge judge;
    const auto report = harness::grade_answers(answers, judge);
    CHECK(report.grades.size() == 2);
    CHECK_FALSE(report.grades[0].correct);
    CHECK(report.grades[1].correct);
}

TEST_CASE("answer records survive the JSONL round trip") {
    testutil::TempDir dir("answers_io");
    std::vector<harness::AnswerRecord> answers;
    answers.push_back(make_answer("q1", harness::QuestionType::Temporal, "when?", "march",
                                  "it was march"));
    answers.back().anchors = {"car_maintenance_march"};
    answers.back().prompt_tokens = 120;
    answers.back().completion_tokens = 9;
    answers.push_back(make_answer("q2", harness::QuestionType::Abstention, "dog?", "none",
                                  std::string(retrieve::kAbstention)));
    answers.back().state = "C";
    answers.back().confidence = "None";
    harness::AnswerRecord failed;
    failed.question_id = "q3";
    failed.question_type = harness::QuestionType::MultiSession;
    failed.question = "which?";
    failed.oracle_answer = "both";
    failed.failed = true;
    failed.error = "dangling link";
    answers.push_back(failed);

    const auto path = dir / "answers.jsonl";
    harness::write_answers(path, answers);
    const auto loaded = harness::read_answers(path);
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < answers.size(); ++i) {
        CAPTURE(i);
        CHECK(loaded[i].question_id == answers[i].question_id);
        CHECK(loaded[i].question_type == answers[i].question_type);
        CHECK(loaded[i].question == answers[i].question);
        CHECK(loaded[i].oracle_answer == answers[i].oracle_answer);
        CHECK(loaded[i].state == answers[i].state);
        CHECK(loaded[i].confidence == answers[i].confidence);
        CHECK(loaded[i].answer == answers[i].answer);
        CHECK(loaded[i].anchors == answers[i].anchors);
        CHECK(loaded[i].prompt_tokens == answers[i].prompt_tokens);
        CHECK(loaded[i].completion_tokens == answers[i].completion_tokens);
        CHECK(loaded[i].failed == answers[i].failed);
        CHECK(loaded[i].error == answers[i].error);
    }

    std::ofstream(path, std::ios::app) << "{\"question_id\":\"q4\"}\n";
    CHECK_THROWS_AS(harness::read_answers(path), SchemaError);
}

TEST_CASE("deterministic judge applies normalized containment") {
    harness::DeterministicJudge judge;

    SUBCASE("oracle tokens found despite case and punctuation") {
        const auto grade = judge.grade(make_answer("q", harness::QuestionType::SingleSession,
                                                   "race time?", "35:00",
                                                   "The race time was 35:00"));
        CHECK(grade.correct);
        CHECK(grade.category == "single_session");
    }
    SUBCASE("missing oracle token fails with a named rationale") {
        const auto grade = judge.grade(make_answer("q", harness::QuestionType::SingleSession,
                                                   "color?", "forest green",
                                                   "I believe it was green."));
        CHECK_FALSE(grade.correct);
        CHECK(grade.judge_rationale.find("forest") != std::string::npos);
    }
    SUBCASE("abstention requires the exact sentence") {
        auto abstained = make_answer("q", harness::QuestionType::Abstention, "dog?", "none",
                                     std::string(retrieve::kAbstention));
        CHECK(judge.grade(abstained).correct);

        auto substantive = make_answer("q", harness::QuestionType::Abstention, "dog?", "none",
                                       "Your dog is called Rex.");
        CHECK_FALSE(judge.grade(substantive).correct);

        auto near_miss = make_answer("q", harness::QuestionType::Abstention, "dog?", "none",
                                     "I don't have that information stored");
        CHECK_FALSE(judge.grade(near_miss).correct); // missing final period
    }
    SUBCASE("an abstention sentence does not satisfy a substantive oracle") {
        const auto grade = judge.grade(make_answer("q", harness::QuestionType::Temporal, "when?",
                                                   "2023-05-10",
                                                   std::string(retrieve::kAbstention)));
        CHECK_FALSE(grade.correct);
    }
    SUBCASE("failed recall grades as incorrect") {
        harness::AnswerRecord record;
        record.question_id = "q";
        record.question_type = harness::QuestionType::MultiSession;
        record.failed = true;
        record.error = "dangling link";
        const auto grade = judge.grade(record);
        CHECK_FALSE(grade.correct);
        CHECK(grade.judge_rationale.find("recall failed") != std::string::npos);
    }
}

TEST_CASE("model judge parses verdicts, retries noise, and flags exhaustion") {
    const auto answer = make_answer("q1", harness::QuestionType::SingleSession, "race time?",
                                    "35:00", "The time was 35:00.");

    SUBCASE("yes verdict") {
        testutil::ScriptedProvider backend({"Yes, the candidate matches."});
        harness::ModelJudge judge(backend);
        const auto grade = judge.grade(answer);
        CHECK(grade.correct);
        CHECK(grade.judge_rationale == "model verdict: yes");
    }
    SUBCASE("no verdict") {
        testutil::ScriptedProvider backend({"no"});
        harness::ModelJudge judge(backend);
        CHECK_FALSE(judge.grade(answer).correct);
    }
    SUBCASE("unparseable reply retried, then accepted") {
        testutil::ScriptedProvider backend({"hmm, let me think", "yes"});
        harness::ModelJudge judge(backend);
        CHECK(judge.grade(answer).correct);
        CHECK(backend.calls() == 2);
    }
    SUBCASE("retryable provider failure retried") {
        testutil::ScriptedProvider backend({"yes"});
        backend.fail_next(1, true);
        harness::ModelJudge judge(backend);
        CHECK(judge.grade(answer).correct);
        CHECK(backend.calls() == 2);
    }
    SUBCASE("persistent noise exhausts into a flag") {
        testutil::ScriptedProvider backend({"shrug"});
        harness::ModelJudge judge(backend, 2);
        std::vector<harness::AnswerRecord> answers = {answer};
        const auto report = harness::grade_answers(answers, judge);
        CHECK(report.grades.empty());
        REQUIRE(report.flagged.size() == 1);
        CHECK(report.flagged[0].question_id == "q1");
        CHECK(report.flagged[0].reason.find("3 attempts") != std::string::npos);
        CHECK(backend.calls() == 3);
    }
    SUBCASE("grade completeness across mixed outcomes") {
        testutil::ScriptedProvider backend({"yes", "nonsense", "nonsense", "nonsense", "no"});
        harness::ModelJudge judge(backend, 2);
        std::vector<harness::AnswerRecord> answers = {
            make_answer("a", harness::QuestionType::SingleSession, "?", "x", "x"),
            make_answer("b", harness::QuestionType::SingleSession, "?", "x", "x"),
            make_answer("c", harness::QuestionType::SingleSession, "?", "x", "x")};
        const auto report = harness::grade_answers(answers, judge);
        CHECK(report.grades.size() + report.flagged.size() == answers.size());
        CHECK(report.grades.size() == 2);
        REQUIRE(report.flagged.size() == 1);
        CHECK(report.flagged[0].question_id == "b");
    }
}

TEST_CASE("grades survive the JSONL round trip") {
    testutil::TempDir dir("grades_io");
    std::vector<harness::GradedAnswer> grades(2);
    grades[0] = {"q1", true, "all tokens present", "temporal"};
    grades[1] = {"q2", false, "missing oracle tokens: kayak", "multi_session"};
    const auto path = dir / "grades.jsonl";
    harness::write_grades(path, grades);
    const auto loaded = harness::read_grades(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].question_id == "q1");
    CHECK(loaded[0].correct);
    CHECK(loaded[0].category == "temporal");
    CHECK(loaded[1].judge_rationale == "missing oracle tokens: kayak");
    CHECK_FALSE(loaded[1].correct);
}

TEST_CASE("per-category accuracy pools abstention and keeps denominators whole") {
    const auto cases = reference_cases();

    SUBCASE("dual-trace condition vector: 99 graded questions") {
        const auto grades = reference_grades(cases,
                                             {{"single_session", 15},
                                              {"multi_session", 10},
                                              {"knowledge_update", 16},
                                              {"temporal", 13},
                                              {"abstention", 19}},
                                             {"abstention_19"});
        REQUIRE(grades.size() == 99);
        const auto table = harness::per_category_accuracy(grades, cases);
        CHECK(table.per_category.at("single_session").percent() == 75.0);
        CHECK(table.per_category.at("multi_session").percent() == 50.0);
        CHECK(table.per_category.at("knowledge_update").percent() == 80.0);
        CHECK(table.per_category.at("temporal").percent() == 65.0);
        CHECK(table.per_category.at("abstention").percent() == 100.0);
        CHECK(table.per_category.at("abstention").total == 19);
        CHECK(table.overall.total == 99);
        CHECK(table.overall.correct == 73);
        CHECK(round1(table.overall.percent()) == 73.7);

        int denominator_sum = 0;
        for (const auto& [name, row] : table.per_category) denominator_sum += row.total;
        CHECK(denominator_sum == table.overall.total);

        // The same grades, read back standalone, produce the same table.
        const auto standalone = harness::accuracy_from_grades(grades);
        CHECK(standalone.overall.correct == table.overall.correct);
        CHECK(standalone.per_category.at("temporal").total ==
              table.per_category.at("temporal").total);
    }
    SUBCASE("no-protocol baseline: abstention-only correctness") {
        const auto grades = reference_grades(cases, {{"single_session", 0},
                                                     {"multi_session", 0},
                                                     {"knowledge_update", 0},
                                                     {"temporal", 0},
                                                     {"abstention", 20}});
        const auto table = harness::per_category_accuracy(grades, cases);
        CHECK(table.overall.percent() == 20.0);
        CHECK(table.per_category.at("abstention").percent() == 100.0);
        CHECK(table.per_category.at("single_session").percent() == 0.0);
    }
    SUBCASE("all-correct fixture scores 100 everywhere") {
        const auto grades = reference_grades(cases, {{"single_session", 20},
                                                     {"multi_session", 20},
                                                     {"knowledge_update", 20},
                                                     {"temporal", 20},
                                                     {"abstention", 20}});
        const auto table = harness::per_category_accuracy(grades, cases);
        for (const auto& [name, row] : table.per_category) CHECK(row.percent() == 100.0);
        CHECK(table.overall.percent() == 100.0);
    }
    SUBCASE("grade for an unknown question rejected") {
        std::vector<harness::GradedAnswer> grades = {{"zz_99", true, "", "temporal"}};
        CHECK_THROWS_WITH_AS(harness::per_category_accuracy(grades, cases),
                             doctest::Contains("zz_99"), SchemaError);
    }
    SUBCASE("duplicate grades rejected") {
        std::vector<harness::GradedAnswer> grades = {{"temporal_0", true, "", "temporal"},
                                                     {"temporal_0", false, "", "temporal"}};
        CHECK_THROWS_WITH_AS(harness::per_category_accuracy(grades, cases),
                             doctest::Contains("duplicate"), SchemaError);
    }
}

TEST_CASE("token reports come from the ledger and hand-computed deltas hold") {
    testutil::TempDir dir("tokens");
    auto write_ledger = [&](const std::string& name, const std::vector<std::string>& lines) {
        const auto path = dir / name;
        std::ofstream out(path);
        for (const auto& line : lines) out << line << '\n';
        return path;
    };

    const auto ledger_a = write_ledger(
        "a.jsonl",
        {R"({"type":"config","condition":"c6"})",
         R"({"type":"session","session_id":"s1","status":"completed","outcome":"pair_stored","tier":"FULL","anchor":"x","prompt_tokens":100,"completion_tokens":10,"wall_seconds":0})",
         R"({"type":"session","session_id":"s2","status":"failed","error":"stall"})",
         R"({"type":"session","session_id":"s3","status":"completed","outcome":"dropped","tier":"DROP","anchor":"","prompt_tokens":50,"completion_tokens":20,"wall_seconds":0})",
         R"({"type":"summary","completed":2,"failed":1})"});
    const auto teach_a = harness::teach_tokens(ledger_a);
    CHECK_FALSE(teach_a.empty);
    CHECK(teach_a.count == 2); // failed sessions are excluded
    CHECK(teach_a.mean_prompt() == 75.0);
    CHECK(teach_a.mean_completion() == 15.0);
    CHECK(teach_a.mean_total() == 90.0);

    const auto ledger_b = write_ledger(
        "b.jsonl",
        {R"({"type":"session","session_id":"s1","status":"completed","outcome":"fact_stored","tier":"FULL","anchor":"y","prompt_tokens":100,"completion_tokens":20,"wall_seconds":0})"});
    const auto teach_b = harness::teach_tokens(ledger_b);
    CHECK(teach_b.mean_total() == 120.0);

    // Hand computation: (75-100)/100, (15-20)/20, (90-120)/120.
    const auto delta = harness::token_delta(teach_a, teach_b);
    CHECK(delta.defined);
    CHECK(delta.prompt_pct == doctest::Approx(-25.0));
    CHECK(delta.completion_pct == doctest::Approx(-25.0));
    CHECK(delta.total_pct == doctest::Approx(-25.0));

    const auto self_delta = harness::token_delta(teach_a, teach_a);
    CHECK(self_delta.prompt_pct == doctest::Approx(0.0));
    CHECK(self_delta.total_pct == doctest::Approx(0.0));

    const auto empty_ledger = write_ledger("empty.jsonl", {R"({"type":"config"})"});
    const auto none = harness::teach_tokens(empty_ledger);
    CHECK(none.empty);
    CHECK(none.mean_total() == 0.0);
    CHECK_FALSE(harness::token_delta(teach_a, none).defined);

    const auto bad_ledger = write_ledger("bad.jsonl", {"not json at all"});
    CHECK_THROWS_AS(harness::teach_tokens(bad_ledger), ParseError);

    // Recall-side means from answer records; failures excluded.
    std::vector<harness::AnswerRecord> answers(3);
    answers[0].prompt_tokens = 200;
    answers[0].completion_tokens = 30;
    answers[1].prompt_tokens = 100;
    answers[1].completion_tokens = 10;
    answers[2].failed = true;
    const auto recall = harness::recall_tokens(answers);
    CHECK(recall.count == 2);
    CHECK(recall.mean_prompt() == 150.0);
    CHECK(recall.mean_completion() == 20.0);
}

TEST_CASE("checkpoints round-trip and reject a mismatched ledger") {
    testutil::TempDir dir("checkpoint");
    harness::RunCheckpoint checkpoint;
    checkpoint.last_completed_session = "s007";
    checkpoint.ledger = (dir / "teach.jsonl").string();
    checkpoint.rate_window_ms = 30000;
    checkpoint.completed = {"s001", "s007"};
    checkpoint.failed = {"s003"};

    const auto path = dir / "checkpoint.json";
    harness::save_checkpoint(path, checkpoint);
    const auto loaded = harness::load_checkpoint(path);
    CHECK(loaded.last_completed_session == "s007");
    CHECK(loaded.ledger == checkpoint.ledger);
    CHECK(loaded.rate_window_ms == 30000);
    CHECK(loaded.completed == checkpoint.completed);
    CHECK(loaded.failed == checkpoint.failed);

    CHECK(harness::load_checkpoint(dir / "missing.json").completed.empty());

    // A checkpoint belonging to a different ledger is a precondition failure.
    const auto bench = harness::load_benchmark(kBenchmarkPath);
    TeachRun run("checkpoint_mismatch");
    auto store = store::MemoryStore::open(run.store_dir());
    harness::save_checkpoint(run.checkpoint(), checkpoint);
    CHECK_THROWS_WITH_AS(harness::run_teach(bench.sessions, teach_config("c6"), store, run.scorer,
                                            run.generator, run.checkpoint(), run.ledger()),
                         doctest::Contains("checkpoint references ledger"), ValidationError);
}

TEST_SUITE_END();
