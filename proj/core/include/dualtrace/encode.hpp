// Encoding pipeline: turns a scored session into stored traces according to
// the active condition (dual-trace vs fact-only) and routing tier.
#pragma once

#include "dualtrace/gate.hpp"
#include "dualtrace/session.hpp"
#include "dualtrace/store.hpp"

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dualtrace::provider {
class Provider;
}

namespace dualtrace::encode {

enum class Condition { DualTrace, FactOnly };

struct ConditionConfig {
    Condition condition = Condition::DualTrace;
    gate::Scheme routing_scheme = gate::Scheme::TwoTier;

    static ConditionConfig c6() { return {Condition::DualTrace, gate::Scheme::TwoTier}; }
    static ConditionConfig c7() { return {Condition::FactOnly, gate::Scheme::TwoTier}; }
    static ConditionConfig c4() { return {Condition::DualTrace, gate::Scheme::ThreeTier}; }
};

/// Raw generator output before anchoring/validation.
struct GeneratedTraces {
    std::string topic; // proposed anchor phrase
    std::string info_type;
    std::string category;
    std::vector<std::string> facts;
    std::string scene_body; // empty when no scene was requested
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

class TraceGenerator {
public:
    virtual ~TraceGenerator() = default;
    virtual GeneratedTraces generate(const SessionTranscript& session, bool want_scene) = 0;
};

/// Deterministic generator for tests: copies topic/facts from the fixture
/// annotations and templates a scene embedding every component plus the
/// session date. Makes one provider call purely so token accounting flows
/// through the same ledger path as the model-backed generator.
class MockTraceGenerator : public TraceGenerator {
public:
    explicit MockTraceGenerator(provider::Provider& backend) : backend_(backend) {}
    GeneratedTraces generate(const SessionTranscript& session, bool want_scene) override;

private:
    provider::Provider& backend_;
};

/// Provider-backed generator: one call extracts topic/facts as JSON, a
/// second drafts the scene narrative. Retries retryable failures and
/// malformed replies up to max_retries before surfacing ProviderError.
class ModelTraceGenerator : public TraceGenerator {
public:
    explicit ModelTraceGenerator(provider::Provider& backend, int max_retries = 2)
        : backend_(backend), max_retries_(max_retries) {}
    GeneratedTraces generate(const SessionTranscript& session, bool want_scene) override;

private:
    provider::Provider& backend_;
    int max_retries_;
};

/// Deterministic slug from the generator's topic proposal: lowercase,
/// non-alphanumerics collapsed to single underscores, trimmed, truncated to
/// 64 chars. Empty proposals fall back to `session_<session_id>`.
Anchor make_anchor(const std::string& session_id, const std::string& topic_proposal);

/// Prefix/suffix injection for nonconforming generator scenes: strips blank
/// lines, forces the `Picture:` prefix and the closing disclaimer. The
/// result still goes through full entry validation.
std::string repair_scene(std::string body);

/// Cooperative cancellation for the harness watchdog: checked before any
/// store mutation so an abandoned worker cannot write late.
class CancelToken {
public:
    void cancel() { flag_.store(true); }
    bool cancelled() const { return flag_.load(); }

private:
    std::atomic<bool> flag_{false};
};

/// Thrown when a cancel token fires mid-encode; the session produced no
/// store mutation.
struct Cancelled : std::runtime_error {
    Cancelled() : std::runtime_error("encode cancelled") {}
};

struct EncodeOutcome {
    store::SessionOutcome result = store::SessionOutcome::Dropped;
    gate::Tier tier = gate::Tier::Drop;
    std::optional<Anchor> anchor;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

/// Side-effect-free first phase: scoring, routing, and trace generation.
/// Safe to run on a worker thread; all store mutation happens in
/// commit_encode on the caller's thread.
struct PreparedEncode {
    gate::EvidenceScore score;
    gate::RoutingDecision decision;
    GeneratedTraces traces;
    bool want_scene = false;
};

PreparedEncode prepare_encode(const SessionTranscript& session, const ConditionConfig& config,
                              gate::SessionScorer& scorer, TraceGenerator& generator,
                              const CancelToken* cancel = nullptr);

/// Second phase: builds entries from prepared material and writes them.
/// DROP touches nothing; FULL under DualTrace stores a pair; everything
/// else stored is fact-only. With `mark_processed` the session-ledger entry
/// commits atomically with the inserted records (or alone for drops), so an
/// interrupted run can never encode the same session twice.
EncodeOutcome commit_encode(const SessionTranscript& session, const ConditionConfig& config,
                            const PreparedEncode& prepared, store::MemoryStore& store,
                            const CancelToken* cancel = nullptr, bool mark_processed = false,
                            std::int64_t wall_seconds = 0);

/// prepare_encode + commit_encode in one call. Scorer/generator failures
/// propagate so the caller can mark the session failed and resume later.
EncodeOutcome encode_session(const SessionTranscript& session, const ConditionConfig& config,
                             gate::SessionScorer& scorer, TraceGenerator& generator,
                             store::MemoryStore& store, const CancelToken* cancel = nullptr);

} // namespace dualtrace::encode
