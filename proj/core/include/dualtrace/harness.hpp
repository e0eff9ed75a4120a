// Evaluation harness: benchmark ingestion, checkpointed teach and recall
// phases, answer judging, and per-category accuracy / token accounting.
#pragma once

#include "dualtrace/encode.hpp"
#include "dualtrace/gate.hpp"
#include "dualtrace/session.hpp"
#include "dualtrace/store.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualtrace::provider {
class Provider;
}

namespace dualtrace::harness {

// ---------------------------------------------------------------------------
// Benchmark

enum class QuestionType { SingleSession, MultiSession, KnowledgeUpdate, Temporal, Abstention };

std::string_view to_string(QuestionType type);
std::optional<QuestionType> question_type_from_string(std::string_view text);

struct BenchmarkCase {
    std::string question_id;
    QuestionType question_type = QuestionType::SingleSession;
    std::string question;
    std::string oracle_answer;
    std::vector<std::string> evidence_session_ids;
};

struct Benchmark {
    std::vector<SessionTranscript> sessions;
    std::vector<BenchmarkCase> cases;
};

/// Loads either the native benchmark file (object with "sessions"/"cases")
/// or the external distribution's array-of-questions shape, which an adapter
/// flattens into the same structure (haystack sessions deduplicated by id,
/// `_abs` question ids pooled as abstention). Throws SchemaError naming the
/// offending field.
Benchmark load_benchmark(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Teach phase

struct TeachConfig {
    encode::ConditionConfig condition;
    std::string condition_name; // "c6" / "c7" / "c4"; free-form label in the ledger
    int parallel = 1;
    std::chrono::milliseconds stall_window{30000};
    std::uint64_t seed = 42;
    /// Extra effective-config fields echoed verbatim into the ledger header
    /// line (provider endpoint, model name, ...). Never put secrets here.
    std::map<std::string, std::string> config_echo;
};

/// On-disk resume state. The store's session ledger is the commit point;
/// the checkpoint is a fast-path mirror reconciled against it on load.
struct RunCheckpoint {
    std::string last_completed_session;
    std::string ledger; // run-ledger path this checkpoint belongs to
    std::int64_t rate_window_ms = 0;
    std::vector<std::string> completed;
    std::vector<std::string> failed;
};

/// Missing file -> default-constructed checkpoint. Malformed -> SchemaError.
RunCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Atomic write (tmp + rename).
void save_checkpoint(const std::filesystem::path& path, const RunCheckpoint& checkpoint);

struct TeachResult {
    int completed = 0; // includes sessions reconstructed from a previous run
    int reused = 0;    // subset of completed that were already in the store ledger
    int failed = 0;
    store::CoverageStats coverage;
    std::int64_t prompt_tokens = 0; // totals across completed sessions
    std::int64_t completion_tokens = 0;
    std::vector<std::string> failed_sessions;
};

/// Encodes every session in order (prepare bounded-parallel, commits strictly
/// in submission order), appending one ledger line per session and saving the
/// checkpoint after each completion. Sessions already marked processed in the
/// store are reconstructed into the ledger without re-encoding, so an
/// interrupted run resumed under the deterministic mock produces a ledger
/// byte-identical to an uninterrupted one. A session that produces no result
/// within the stall window is cancelled, marked failed, and the run moves on;
/// provider failures that survived their retries stop the run cleanly with
/// the checkpoint on disk (rethrown to the caller).
TeachResult run_teach(const std::vector<SessionTranscript>& sessions, const TeachConfig& config,
                      store::MemoryStore& store, gate::SessionScorer& scorer,
                      encode::TraceGenerator& generator,
                      const std::filesystem::path& checkpoint_path,
                      const std::filesystem::path& ledger_path);

// ---------------------------------------------------------------------------
// Recall phase

struct AnswerRecord {
    std::string question_id;
    QuestionType question_type = QuestionType::SingleSession;
    std::string question;
    std::string oracle_answer;
    std::string state;      // "A" / "B" / "C"; empty when failed
    std::string confidence; // "High" / "Medium" / "None"
    std::string answer;
    std::vector<std::string> anchors;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool failed = false;
    std::string error;
};

/// One answer record per case, in case order. Per-question failures are
/// recorded on the answer record and the run continues.
std::vector<AnswerRecord> run_recall(const std::vector<BenchmarkCase>& cases,
                                     const store::MemoryStore& store,
                                     provider::Provider& backend, std::size_t k = 10,
                                     int parallel = 1);

void write_answers(const std::filesystem::path& path, const std::vector<AnswerRecord>& answers);
std::vector<AnswerRecord> read_answers(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Judging

struct GradedAnswer {
    std::string question_id;
    bool correct = false;
    std::string judge_rationale;
    std::string category; // pooled category: abstention keeps its own label
};

struct FlaggedAnswer {
    std::string question_id;
    std::string reason;
};

class Judge {
public:
    virtual ~Judge() = default;

    /// Throws ProviderError when the judgment itself failed; grade_answers
    /// turns that into a flagged answer.
    virtual GradedAnswer grade(const AnswerRecord& answer) = 0;
};

/// Normalized-containment judge: lowercase both sides, strip punctuation,
/// correct iff every oracle token appears among the answer tokens.
/// Abstention cases are correct iff the answer is byte-identical to the
/// abstention sentence.
class DeterministicJudge : public Judge {
public:
    GradedAnswer grade(const AnswerRecord& answer) override;
};

/// Model-backed comparison of answer vs oracle; expects a yes/no verdict and
/// retries retryable failures and unparseable replies.
class ModelJudge : public Judge {
public:
    explicit ModelJudge(provider::Provider& backend, int max_retries = 2);

    GradedAnswer grade(const AnswerRecord& answer) override;

private:
    provider::Provider& backend_;
    int max_retries_;
};

struct GradeReport {
    std::vector<GradedAnswer> grades;
    std::vector<FlaggedAnswer> flagged; // judge failures; |grades| + |flagged| = |answers|
};

GradeReport grade_answers(const std::vector<AnswerRecord>& answers, Judge& judge);

void write_grades(const std::filesystem::path& path, const std::vector<GradedAnswer>& grades);
std::vector<GradedAnswer> read_grades(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Accuracy accounting

struct CategoryAccuracy {
    int correct = 0;
    int total = 0;

    double percent() const { return total == 0 ? 0.0 : 100.0 * correct / total; }
};

struct AccuracyTable {
    std::map<std::string, CategoryAccuracy> per_category;
    CategoryAccuracy overall; // denominator = number of graded questions
};

/// Accuracy per category plus overall. The category of a grade comes from its
/// benchmark case; abstention cases pool into "abstention" and never appear
/// in a surface type's denominator. Ungraded cases are excluded from every
/// denominator. A grade whose question_id is not in the benchmark, or a
/// duplicate grade, raises SchemaError.
AccuracyTable per_category_accuracy(const std::vector<GradedAnswer>& grades,
                                    const std::vector<BenchmarkCase>& cases);

/// Same accounting when no benchmark is at hand: categories come from the
/// grade records themselves (as written by grade_answers).
AccuracyTable accuracy_from_grades(const std::vector<GradedAnswer>& grades);

// ---------------------------------------------------------------------------
// Token accounting

struct PhaseTokens {
    std::size_t count = 0; // completed sessions (teach) or answered queries (recall)
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool empty = true; // nothing completed; means are vacuous

    double mean_prompt() const { return count == 0 ? 0.0 : double(prompt_tokens) / count; }
    double mean_completion() const {
        return count == 0 ? 0.0 : double(completion_tokens) / count;
    }
    double mean_total() const { return mean_prompt() + mean_completion(); }
};

/// Sums completed-session lines of a run ledger. Malformed lines raise
/// ParseError naming the line number.
PhaseTokens teach_tokens(const std::filesystem::path& ledger_path);

PhaseTokens recall_tokens(const std::vector<AnswerRecord>& answers);

struct TokenDelta {
    bool defined = false; // false when either side is empty
    double prompt_pct = 0.0;
    double completion_pct = 0.0;
    double total_pct = 0.0;
};

/// Relative difference of `a` against baseline `b`, in percent of `b`'s
/// per-unit means (negative = `a` cheaper).
TokenDelta token_delta(const PhaseTokens& a, const PhaseTokens& b);

} // namespace dualtrace::harness
