#include "dualtrace/harness.hpp"

#include "dualtrace/errors.hpp"
#include "dualtrace/provider.hpp"
#include "dualtrace/retrieve.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <future>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

namespace dualtrace::harness {

using nlohmann::ordered_json;

std::string_view to_string(QuestionType type) {
    switch (type) {
    case QuestionType::SingleSession: return "single_session";
    case QuestionType::MultiSession: return "multi_session";
    case QuestionType::KnowledgeUpdate: return "knowledge_update";
    case QuestionType::Temporal: return "temporal";
    case QuestionType::Abstention: return "abstention";
    }
    return "single_session";
}

std::optional<QuestionType> question_type_from_string(std::string_view text) {
    if (text == "single_session") return QuestionType::SingleSession;
    if (text == "multi_session") return QuestionType::MultiSession;
    if (text == "knowledge_update") return QuestionType::KnowledgeUpdate;
    if (text == "temporal") return QuestionType::Temporal;
    if (text == "abstention") return QuestionType::Abstention;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Benchmark loading

namespace {

[[noreturn]] void missing_field(const std::string& context, const std::string& field) {
    throw SchemaError(context + ": missing field '" + field + "'");
}

const ordered_json& require(const ordered_json& obj, const std::string& field,
                            const std::string& context) {
    if (!obj.is_object() || !obj.contains(field)) missing_field(context, field);
    return obj.at(field);
}

std::string require_string(const ordered_json& obj, const std::string& field,
                           const std::string& context) {
    const auto& value = require(obj, field, context);
    if (!value.is_string())
        throw SchemaError(context + ": field '" + field + "' must be a string");
    return value.get<std::string>();
}

UtcTimestamp parse_session_date(const std::string& text, const std::string& context) {
    if (const auto ts = UtcTimestamp::parse(text)) return *ts;
    // External distributions stamp sessions like "2023/05/20 (Sat) 02:21".
    static const std::regex kLooseDate(R"((\d{4})/(\d{2})/(\d{2}).*?(\d{2}):(\d{2}))");
    std::smatch m;
    if (std::regex_search(text, m, kLooseDate)) {
        UtcTimestamp ts;
        ts.year = std::stoi(m[1]);
        ts.month = std::stoi(m[2]);
        ts.day = std::stoi(m[3]);
        ts.hour = std::stoi(m[4]);
        ts.minute = std::stoi(m[5]);
        if (ts.valid()) return ts;
    }
    throw SchemaError(context + ": unparseable session date '" + text + "'");
}

std::vector<SessionMessage> parse_messages(const ordered_json& value, const std::string& context) {
    if (!value.is_array()) throw SchemaError(context + ": field 'messages' must be an array");
    std::vector<SessionMessage> messages;
    for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string ctx = context + ".messages[" + std::to_string(i) + "]";
        SessionMessage msg;
        msg.role = require_string(value.at(i), "role", ctx);
        msg.content = require_string(value.at(i), "content", ctx);
        messages.push_back(std::move(msg));
    }
    return messages;
}

SessionAnnotations parse_annotations(const ordered_json& value, const std::string& context) {
    SessionAnnotations a;
    a.relevance = require(value, "relevance", context).get<int>();
    a.specificity = require(value, "specificity", context).get<int>();
    a.explicitness = require(value, "explicitness", context).get<int>();
    a.stakes = value.value("stakes", false);
    a.topic = require_string(value, "topic", context);
    a.info_type = require_string(value, "info_type", context);
    a.category = require_string(value, "category", context);
    for (const auto& fact : require(value, "facts", context))
        a.facts.push_back(fact.get<std::string>());
    return a;
}

QuestionType parse_internal_type(const std::string& text, const std::string& context) {
    if (const auto type = question_type_from_string(text)) return *type;
    throw SchemaError(context + ": unknown question_type '" + text + "'");
}

Benchmark load_internal(const ordered_json& root) {
    Benchmark bench;
    const auto& sessions = require(root, "sessions", "benchmark");
    if (!sessions.is_array()) throw SchemaError("benchmark: field 'sessions' must be an array");
    std::set<std::string> session_ids;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const std::string ctx = "sessions[" + std::to_string(i) + "]";
        const auto& s = sessions.at(i);
        SessionTranscript transcript;
        transcript.id = require_string(s, "id", ctx);
        if (!session_ids.insert(transcript.id).second)
            throw SchemaError(ctx + ": duplicate session id '" + transcript.id + "'");
        transcript.date = parse_session_date(require_string(s, "date", ctx), ctx);
        transcript.messages = parse_messages(require(s, "messages", ctx), ctx);
        if (s.contains("annotations") && !s.at("annotations").is_null())
            transcript.annotations = parse_annotations(s.at("annotations"), ctx + ".annotations");
        bench.sessions.push_back(std::move(transcript));
    }

    const auto& cases = require(root, "cases", "benchmark");
    if (!cases.is_array()) throw SchemaError("benchmark: field 'cases' must be an array");
    std::set<std::string> case_ids;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const std::string ctx = "cases[" + std::to_string(i) + "]";
        const auto& c = cases.at(i);
        BenchmarkCase item;
        item.question_id = require_string(c, "question_id", ctx);
        if (!case_ids.insert(item.question_id).second)
            throw SchemaError(ctx + ": duplicate question_id '" + item.question_id + "'");
        item.question_type = parse_internal_type(require_string(c, "question_type", ctx), ctx);
        item.question = require_string(c, "question", ctx);
        item.oracle_answer = require_string(c, "oracle_answer", ctx);
        if (c.contains("evidence_session_ids"))
            for (const auto& id : c.at("evidence_session_ids"))
                item.evidence_session_ids.push_back(id.get<std::string>());
        bench.cases.push_back(std::move(item));
    }
    return bench;
}

QuestionType parse_external_type(const std::string& text, const std::string& question_id,
                                 const std::string& context) {
    // Abstention is an id-level flag in the external distribution, overriding
    // the surface type so those questions pool into their own category.
    if (question_id.size() >= 4 && question_id.substr(question_id.size() - 4) == "_abs")
        return QuestionType::Abstention;
    if (text == "single-session-user" || text == "single-session-assistant" ||
        text == "single-session-preference")
        return QuestionType::SingleSession;
    if (text == "multi-session") return QuestionType::MultiSession;
    if (text == "knowledge-update") return QuestionType::KnowledgeUpdate;
    if (text == "temporal-reasoning") return QuestionType::Temporal;
    throw SchemaError(context + ": unknown question_type '" + text + "'");
}

Benchmark load_external(const ordered_json& root) {
    Benchmark bench;
    std::set<std::string> session_ids;
    std::set<std::string> case_ids;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const std::string ctx = "questions[" + std::to_string(i) + "]";
        const auto& q = root.at(i);
        BenchmarkCase item;
        item.question_id = require_string(q, "question_id", ctx);
        if (!case_ids.insert(item.question_id).second)
            throw SchemaError(ctx + ": duplicate question_id '" + item.question_id + "'");
        item.question_type = parse_external_type(require_string(q, "question_type", ctx),
                                                 item.question_id, ctx);
        item.question = require_string(q, "question", ctx);
        const auto& answer = require(q, "answer", ctx);
        item.oracle_answer = answer.is_string() ? answer.get<std::string>() : answer.dump();
        if (q.contains("answer_session_ids"))
            for (const auto& id : q.at("answer_session_ids"))
                item.evidence_session_ids.push_back(id.get<std::string>());

        const auto& ids = require(q, "haystack_session_ids", ctx);
        const auto& dates = require(q, "haystack_dates", ctx);
        const auto& transcripts = require(q, "haystack_sessions", ctx);
        if (!ids.is_array() || !dates.is_array() || !transcripts.is_array() ||
            ids.size() != dates.size() || ids.size() != transcripts.size())
            throw SchemaError(ctx + ": haystack arrays missing or disagree in length");
        for (std::size_t j = 0; j < ids.size(); ++j) {
            const std::string id = ids.at(j).get<std::string>();
            if (!session_ids.insert(id).second) continue; // shared haystacks overlap
            const std::string sctx = ctx + ".haystack_sessions[" + std::to_string(j) + "]";
            SessionTranscript transcript;
            transcript.id = id;
            transcript.date = parse_session_date(dates.at(j).get<std::string>(), sctx);
            transcript.messages = parse_messages(transcripts.at(j), sctx);
            bench.sessions.push_back(std::move(transcript));
        }
        bench.cases.push_back(std::move(item));
    }
    return bench;
}

} // namespace

Benchmark load_benchmark(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot open benchmark file '" + path.string() + "'");
    ordered_json root = ordered_json::parse(in, nullptr, false);
    if (root.is_discarded())
        throw SchemaError("benchmark file '" + path.string() + "' is not valid JSON");
    if (root.is_array()) return load_external(root);
    if (root.is_object()) return load_internal(root);
    throw SchemaError("benchmark: expected a top-level object with field 'sessions' or an array");
}

// ---------------------------------------------------------------------------
// Checkpoints

RunCheckpoint load_checkpoint(const std::filesystem::path& path) {
    RunCheckpoint checkpoint;
    std::ifstream in(path, std::ios::binary);
    if (!in) return checkpoint; // first run
    ordered_json root = ordered_json::parse(in, nullptr, false);
    if (root.is_discarded() || !root.is_object())
        throw SchemaError("checkpoint '" + path.string() + "' is not a JSON object");
    if (root.value("version", 1) != 1)
        throw SchemaError("checkpoint: unsupported version " +
                          std::to_string(root.value("version", 0)));
    checkpoint.last_completed_session = root.value("last_completed_session", "");
    checkpoint.ledger = root.value("ledger", "");
    checkpoint.rate_window_ms = root.value("rate_window_ms", std::int64_t{0});
    if (root.contains("completed"))
        for (const auto& id : root.at("completed"))
            checkpoint.completed.push_back(id.get<std::string>());
    if (root.contains("failed"))
        for (const auto& id : root.at("failed")) checkpoint.failed.push_back(id.get<std::string>());
    return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const RunCheckpoint& checkpoint) {
    ordered_json root;
    root["version"] = 1;
    root["last_completed_session"] = checkpoint.last_completed_session;
    root["ledger"] = checkpoint.ledger;
    root["rate_window_ms"] = checkpoint.rate_window_ms;
    root["completed"] = checkpoint.completed;
    root["failed"] = checkpoint.failed;

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw StoreError("cannot write checkpoint '" + tmp + "'");
        out << root.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Teach phase

namespace {

std::string_view scheme_name(gate::Scheme scheme) {
    return scheme == gate::Scheme::TwoTier ? "two_tier" : "three_tier";
}

std::string_view condition_mode_name(encode::Condition condition) {
    return condition == encode::Condition::DualTrace ? "dual_trace" : "fact_only";
}

ordered_json config_header(const TeachConfig& config) {
    ordered_json j;
    j["type"] = "config";
    j["condition"] = config.condition_name;
    j["trace_mode"] = std::string(condition_mode_name(config.condition.condition));
    j["scheme"] = std::string(scheme_name(config.condition.routing_scheme));
    j["parallel"] = config.parallel;
    j["stall_window_ms"] = config.stall_window.count();
    j["seed"] = config.seed;
    for (const auto& [key, value] : config.config_echo) j[key] = value;
    return j;
}

ordered_json completed_line(const std::string& session_id, const store::SessionLedgerEntry& entry) {
    ordered_json j;
    j["type"] = "session";
    j["session_id"] = session_id;
    j["status"] = "completed";
    j["outcome"] = std::string(store::to_string(entry.outcome));
    j["tier"] = entry.tier;
    j["anchor"] = entry.anchor;
    j["prompt_tokens"] = entry.prompt_tokens;
    j["completion_tokens"] = entry.completion_tokens;
    j["wall_seconds"] = entry.wall_seconds;
    return j;
}

ordered_json failed_line(const std::string& session_id, const std::string& error) {
    ordered_json j;
    j["type"] = "session";
    j["session_id"] = session_id;
    j["status"] = "failed";
    j["error"] = error;
    return j;
}

class LedgerWriter {
public:
    explicit LedgerWriter(const std::filesystem::path& path)
        : out_(path, std::ios::trunc | std::ios::binary) {
        if (!out_) throw StoreError("cannot open run ledger '" + path.string() + "'");
    }

    void line(const ordered_json& j) {
        out_ << j.dump() << '\n';
        out_.flush(); // an interrupted run leaves a valid JSONL prefix
    }

private:
    std::ofstream out_;
};

} // namespace

TeachResult run_teach(const std::vector<SessionTranscript>& sessions, const TeachConfig& config,
                      store::MemoryStore& store, gate::SessionScorer& scorer,
                      encode::TraceGenerator& generator,
                      const std::filesystem::path& checkpoint_path,
                      const std::filesystem::path& ledger_path) {
    RunCheckpoint checkpoint = load_checkpoint(checkpoint_path);
    const std::string ledger_name = ledger_path.string();
    if (!checkpoint.ledger.empty() && checkpoint.ledger != ledger_name)
        throw ValidationError("checkpoint references ledger '" + checkpoint.ledger +
                              "' but this run writes '" + ledger_name + "'");
    checkpoint.ledger = ledger_name;
    checkpoint.rate_window_ms = config.stall_window.count();
    // The store's session ledger is the commit point; the id lists are
    // rebuilt from it as the run sweeps the sessions in order.
    checkpoint.completed.clear();
    checkpoint.failed.clear();

    LedgerWriter ledger(ledger_path);
    ledger.line(config_header(config));

    TeachResult result;

    struct Slot {
        std::size_t index = 0;
        bool reused = false;
        std::shared_ptr<encode::CancelToken> token;
        std::future<encode::PreparedEncode> future;
        std::chrono::steady_clock::time_point started;
    };
    std::deque<Slot> in_flight;
    std::vector<std::future<encode::PreparedEncode>> zombies;
    const std::size_t width = static_cast<std::size_t>(std::max(1, config.parallel));
    std::size_t next_launch = 0;

    auto fill = [&] {
        while (next_launch < sessions.size() && in_flight.size() < width) {
            const std::size_t index = next_launch++;
            Slot slot;
            slot.index = index;
            slot.started = std::chrono::steady_clock::now();
            if (store.session_processed(sessions[index].id)) {
                slot.reused = true;
            } else {
                slot.token = std::make_shared<encode::CancelToken>();
                auto token = slot.token;
                const SessionTranscript* session = &sessions[index];
                slot.future = std::async(std::launch::async, [&, session, token] {
                    return encode::prepare_encode(*session, config.condition, scorer, generator,
                                                  token.get());
                });
            }
            in_flight.push_back(std::move(slot));
        }
    };

    auto record_completed = [&](const std::string& session_id) {
        const store::SessionLedgerEntry* entry = store.session_entry(session_id);
        if (!entry) throw StoreError("session '" + session_id + "' missing from store ledger");
        ledger.line(completed_line(session_id, *entry));
        ++result.completed;
        result.prompt_tokens += entry->prompt_tokens;
        result.completion_tokens += entry->completion_tokens;
        checkpoint.completed.push_back(session_id);
        checkpoint.last_completed_session = session_id;
        save_checkpoint(checkpoint_path, checkpoint);
    };

    auto record_failed = [&](const std::string& session_id, const std::string& error) {
        ledger.line(failed_line(session_id, error));
        ++result.failed;
        result.failed_sessions.push_back(session_id);
        checkpoint.failed.push_back(session_id);
        save_checkpoint(checkpoint_path, checkpoint);
    };

    auto drain_zombies = [&] {
        for (auto& z : zombies)
            if (z.valid()) {
                try {
                    z.get();
                } catch (...) {
                    // Abandoned worker; its session is already marked failed.
                }
            }
        zombies.clear();
    };

    fill();
    while (!in_flight.empty()) {
        Slot slot = std::move(in_flight.front());
        in_flight.pop_front();
        const SessionTranscript& session = sessions[slot.index];

        if (slot.reused) {
            ++result.reused;
            record_completed(session.id);
            fill();
            continue;
        }

        if (slot.future.wait_for(config.stall_window) != std::future_status::ready) {
            slot.token->cancel();
            zombies.push_back(std::move(slot.future));
            record_failed(session.id, "stall: no completion within " +
                                          std::to_string(config.stall_window.count()) + " ms");
            fill();
            continue;
        }

        try {
            const encode::PreparedEncode prepared = slot.future.get();
            const auto wall = std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::steady_clock::now() - slot.started)
                                  .count();
            encode::commit_encode(session, config.condition, prepared, store, slot.token.get(),
                                  /*mark_processed=*/true, wall);
            record_completed(session.id);
        } catch (const encode::Cancelled&) {
            record_failed(session.id, "encode cancelled");
        } catch (const ProviderError&) {
            // Retries are already spent inside the generator; nothing more
            // can complete this run. Leave the session unmarked so a resumed
            // run retries it, stop all outstanding work, and surface the
            // failure to the caller with the checkpoint safely on disk.
            for (auto& pending : in_flight)
                if (pending.token) pending.token->cancel();
            for (auto& pending : in_flight)
                if (pending.future.valid()) zombies.push_back(std::move(pending.future));
            drain_zombies();
            save_checkpoint(checkpoint_path, checkpoint);
            throw;
        } catch (const std::exception& error) {
            record_failed(session.id, error.what());
        }
        fill();
    }

    result.coverage = store.coverage_stats();

    ordered_json summary;
    summary["type"] = "summary";
    summary["completed"] = result.completed;
    summary["failed"] = result.failed;
    summary["sessions_processed"] = result.coverage.sessions_processed;
    summary["sessions_stored"] = result.coverage.sessions_stored;
    summary["coverage_ratio"] = result.coverage.coverage_ratio;
    summary["dual_ratio"] = result.coverage.dual_ratio;
    summary["prompt_tokens"] = result.prompt_tokens;
    summary["completion_tokens"] = result.completion_tokens;
    ledger.line(summary);

    save_checkpoint(checkpoint_path, checkpoint);
    drain_zombies();
    return result;
}

// ---------------------------------------------------------------------------
// Recall phase

namespace {

std::string_view confidence_name(retrieve::AnswerConfidence confidence) {
    switch (confidence) {
    case retrieve::AnswerConfidence::High: return "High";
    case retrieve::AnswerConfidence::Medium: return "Medium";
    case retrieve::AnswerConfidence::None: return "None";
    }
    return "None";
}

} // namespace

std::vector<AnswerRecord> run_recall(const std::vector<BenchmarkCase>& cases,
                                     const store::MemoryStore& store,
                                     provider::Provider& backend, std::size_t k, int parallel) {
    std::vector<AnswerRecord> answers(cases.size());

    auto answer_one = [&](std::size_t index) {
        const BenchmarkCase& item = cases[index];
        AnswerRecord record;
        record.question_id = item.question_id;
        record.question_type = item.question_type;
        record.question = item.question;
        record.oracle_answer = item.oracle_answer;
        try {
            const auto outcome = retrieve::answer_question(item.question, store, backend, k);
            record.state = std::string(retrieve::to_string(outcome.state));
            record.confidence = std::string(confidence_name(outcome.confidence));
            record.answer = outcome.answer;
            record.anchors = outcome.anchors;
            record.prompt_tokens = outcome.prompt_tokens;
            record.completion_tokens = outcome.completion_tokens;
        } catch (const std::exception& error) {
            record.failed = true;
            record.error = error.what();
        }
        answers[index] = std::move(record);
    };

    const std::size_t width = static_cast<std::size_t>(std::max(1, parallel));
    if (width <= 1) {
        for (std::size_t i = 0; i < cases.size(); ++i) answer_one(i);
        return answers;
    }

    std::deque<std::future<void>> running;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (running.size() == width) {
            running.front().get();
            running.pop_front();
        }
        running.push_back(std::async(std::launch::async, answer_one, i));
    }
    while (!running.empty()) {
        running.front().get();
        running.pop_front();
    }
    return answers;
}

namespace {

ordered_json answer_to_json(const AnswerRecord& record) {
    ordered_json j;
    j["question_id"] = record.question_id;
    j["question_type"] = std::string(to_string(record.question_type));
    j["question"] = record.question;
    j["oracle_answer"] = record.oracle_answer;
    j["state"] = record.state;
    j["confidence"] = record.confidence;
    j["answer"] = record.answer;
    j["anchors"] = record.anchors;
    j["prompt_tokens"] = record.prompt_tokens;
    j["completion_tokens"] = record.completion_tokens;
    j["failed"] = record.failed;
    j["error"] = record.error;
    return j;
}

std::vector<ordered_json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot open '" + path.string() + "'");
    std::vector<ordered_json> lines;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ParseError("malformed JSONL record", Locator{lineno, ""});
        lines.push_back(std::move(j));
    }
    return lines;
}

} // namespace

void write_answers(const std::filesystem::path& path, const std::vector<AnswerRecord>& answers) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw StoreError("cannot write '" + path.string() + "'");
    for (const auto& record : answers) out << answer_to_json(record).dump() << '\n';
}

std::vector<AnswerRecord> read_answers(const std::filesystem::path& path) {
    std::vector<AnswerRecord> answers;
    int lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        ++lineno;
        const std::string ctx = "answers line " + std::to_string(lineno);
        AnswerRecord record;
        record.question_id = require_string(j, "question_id", ctx);
        const std::string type = require_string(j, "question_type", ctx);
        const auto parsed = question_type_from_string(type);
        if (!parsed) throw SchemaError(ctx + ": unknown question_type '" + type + "'");
        record.question_type = *parsed;
        record.question = require_string(j, "question", ctx);
        record.oracle_answer = require_string(j, "oracle_answer", ctx);
        record.state = require_string(j, "state", ctx);
        record.confidence = require_string(j, "confidence", ctx);
        record.answer = require_string(j, "answer", ctx);
        if (j.contains("anchors"))
            for (const auto& anchor : j.at("anchors"))
                record.anchors.push_back(anchor.get<std::string>());
        record.prompt_tokens = require(j, "prompt_tokens", ctx).get<std::int64_t>();
        record.completion_tokens = require(j, "completion_tokens", ctx).get<std::int64_t>();
        record.failed = j.value("failed", false);
        record.error = j.value("error", "");
        answers.push_back(std::move(record));
    }
    return answers;
}

// ---------------------------------------------------------------------------
// Judging

namespace {

std::vector<std::string> normalized_tokens(const std::string& text) {
    std::string scrubbed;
    scrubbed.reserve(text.size());
    for (const unsigned char ch : text)
        scrubbed += std::isalnum(ch) ? static_cast<char>(std::tolower(ch)) : ' ';
    std::istringstream stream(scrubbed);
    std::vector<std::string> tokens;
    std::string token;
    while (stream >> token) tokens.push_back(token);
    return tokens;
}

GradedAnswer graded_base(const AnswerRecord& answer) {
    GradedAnswer grade;
    grade.question_id = answer.question_id;
    grade.category = std::string(to_string(answer.question_type));
    return grade;
}

} // namespace

GradedAnswer DeterministicJudge::grade(const AnswerRecord& answer) {
    GradedAnswer grade = graded_base(answer);
    if (answer.failed) {
        grade.correct = false;
        grade.judge_rationale = "recall failed: " + answer.error;
        return grade;
    }
    if (answer.question_type == QuestionType::Abstention) {
        grade.correct = answer.answer == retrieve::kAbstention;
        grade.judge_rationale = grade.correct
                                    ? "abstained with the exact sentence"
                                    : "expected abstention, got a substantive answer";
        return grade;
    }
    const auto wanted = normalized_tokens(answer.oracle_answer);
    const auto got = normalized_tokens(answer.answer);
    const std::set<std::string> have(got.begin(), got.end());
    std::vector<std::string> missing;
    for (const auto& token : wanted)
        if (!have.count(token) &&
            std::find(missing.begin(), missing.end(), token) == missing.end())
            missing.push_back(token);
    grade.correct = missing.empty();
    if (grade.correct) {
        grade.judge_rationale = "answer contains every oracle token";
    } else {
        std::string list;
        for (const auto& token : missing) {
            if (!list.empty()) list += ", ";
            list += token;
        }
        grade.judge_rationale = "missing oracle tokens: " + list;
    }
    return grade;
}

ModelJudge::ModelJudge(provider::Provider& backend, int max_retries)
    : backend_(backend), max_retries_(max_retries) {}

GradedAnswer ModelJudge::grade(const AnswerRecord& answer) {
    GradedAnswer grade = graded_base(answer);
    if (answer.failed) {
        grade.correct = false;
        grade.judge_rationale = "recall failed: " + answer.error;
        return grade;
    }

    std::string prompt = "You are grading a memory benchmark response.\n";
    prompt += "Question: " + answer.question + "\n";
    prompt += "Reference answer: " + answer.oracle_answer + "\n";
    prompt += "Candidate answer: " + answer.answer + "\n";
    if (answer.question_type == QuestionType::Abstention)
        prompt += "The correct behavior is to decline to answer. Reply yes only if the "
                  "candidate declined.\n";
    else
        prompt += "Reply yes only if the candidate conveys the reference answer.\n";
    prompt += "Reply with exactly one word: yes or no.";

    provider::Request request;
    request.messages.push_back({"user", prompt});

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        std::string reply;
        try {
            reply = backend_.generate(request).text;
        } catch (const ProviderError& error) {
            if (!error.retryable()) throw;
            last_error = error.what();
            continue;
        }
        for (const auto& token : normalized_tokens(reply)) {
            if (token == "yes") {
                grade.correct = true;
                grade.judge_rationale = "model verdict: yes";
                return grade;
            }
            if (token == "no") {
                grade.correct = false;
                grade.judge_rationale = "model verdict: no";
                return grade;
            }
        }
        last_error = "no yes/no verdict in reply: " + reply.substr(0, 120);
    }
    throw ProviderError("judge failed after " + std::to_string(max_retries_ + 1) +
                            " attempts: " + last_error,
                        false);
}

GradeReport grade_answers(const std::vector<AnswerRecord>& answers, Judge& judge) {
    GradeReport report;
    for (const auto& answer : answers) {
        try {
            report.grades.push_back(judge.grade(answer));
        } catch (const std::exception& error) {
            report.flagged.push_back({answer.question_id, error.what()});
        }
    }
    return report;
}

void write_grades(const std::filesystem::path& path, const std::vector<GradedAnswer>& grades) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw StoreError("cannot write '" + path.string() + "'");
    for (const auto& grade : grades) {
        ordered_json j;
        j["question_id"] = grade.question_id;
        j["correct"] = grade.correct;
        j["judge_rationale"] = grade.judge_rationale;
        j["category"] = grade.category;
        out << j.dump() << '\n';
    }
}

std::vector<GradedAnswer> read_grades(const std::filesystem::path& path) {
    std::vector<GradedAnswer> grades;
    int lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        ++lineno;
        const std::string ctx = "grades line " + std::to_string(lineno);
        GradedAnswer grade;
        grade.question_id = require_string(j, "question_id", ctx);
        const auto& correct = require(j, "correct", ctx);
        if (!correct.is_boolean()) throw SchemaError(ctx + ": field 'correct' must be a boolean");
        grade.correct = correct.get<bool>();
        grade.judge_rationale = require_string(j, "judge_rationale", ctx);
        grade.category = require_string(j, "category", ctx);
        grades.push_back(std::move(grade));
    }
    return grades;
}

// ---------------------------------------------------------------------------
// Accuracy accounting

AccuracyTable per_category_accuracy(const std::vector<GradedAnswer>& grades,
                                    const std::vector<BenchmarkCase>& cases) {
    std::map<std::string, QuestionType> case_types;
    AccuracyTable table;
    for (const auto& item : cases) {
        case_types.emplace(item.question_id, item.question_type);
        table.per_category[std::string(to_string(item.question_type))]; // seed denominator rows
    }

    std::set<std::string> seen;
    for (const auto& grade : grades) {
        const auto it = case_types.find(grade.question_id);
        if (it == case_types.end())
            throw SchemaError("graded question '" + grade.question_id +
                              "' is not in the benchmark");
        if (!seen.insert(grade.question_id).second)
            throw SchemaError("duplicate grade for question '" + grade.question_id + "'");
        auto& row = table.per_category[std::string(to_string(it->second))];
        ++row.total;
        ++table.overall.total;
        if (grade.correct) {
            ++row.correct;
            ++table.overall.correct;
        }
    }
    return table;
}

AccuracyTable accuracy_from_grades(const std::vector<GradedAnswer>& grades) {
    AccuracyTable table;
    std::set<std::string> seen;
    for (const auto& grade : grades) {
        if (!seen.insert(grade.question_id).second)
            throw SchemaError("duplicate grade for question '" + grade.question_id + "'");
        auto& row = table.per_category[grade.category];
        ++row.total;
        ++table.overall.total;
        if (grade.correct) {
            ++row.correct;
            ++table.overall.correct;
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Token accounting

PhaseTokens teach_tokens(const std::filesystem::path& ledger_path) {
    PhaseTokens tokens;
    int lineno = 0;
    std::ifstream in(ledger_path, std::ios::binary);
    if (!in) throw StoreError("cannot open run ledger '" + ledger_path.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ParseError("malformed run-ledger line", Locator{lineno, ""});
        if (j.value("type", "") != "session") continue;
        if (j.value("status", "") != "completed") continue;
        if (!j.contains("prompt_tokens") || !j.contains("completion_tokens"))
            throw ParseError("completed session line without token counts",
                             Locator{lineno, "prompt_tokens"});
        ++tokens.count;
        tokens.prompt_tokens += j.at("prompt_tokens").get<std::int64_t>();
        tokens.completion_tokens += j.at("completion_tokens").get<std::int64_t>();
    }
    tokens.empty = tokens.count == 0;
    return tokens;
}

PhaseTokens recall_tokens(const std::vector<AnswerRecord>& answers) {
    PhaseTokens tokens;
    for (const auto& record : answers) {
        if (record.failed) continue;
        ++tokens.count;
        tokens.prompt_tokens += record.prompt_tokens;
        tokens.completion_tokens += record.completion_tokens;
    }
    tokens.empty = tokens.count == 0;
    return tokens;
}

TokenDelta token_delta(const PhaseTokens& a, const PhaseTokens& b) {
    TokenDelta delta;
    if (a.empty || b.empty) return delta;
    delta.defined = true;
    const auto relative = [](double value, double base) {
        return base == 0.0 ? 0.0 : 100.0 * (value - base) / base;
    };
    delta.prompt_pct = relative(a.mean_prompt(), b.mean_prompt());
    delta.completion_pct = relative(a.mean_completion(), b.mean_completion());
    delta.total_pct = relative(a.mean_total(), b.mean_total());
    return delta;
}

} // namespace dualtrace::harness
