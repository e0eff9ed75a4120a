// Evidence gate: rubric scores and the pure routing tables that decide
// whether a session is dropped, stored fact-only, or fully encoded.
#pragma once

#include "dualtrace/session.hpp"

#include <string_view>

namespace dualtrace::provider {
class Provider;
}

namespace dualtrace::gate {

/// Three rubric dimensions rated 0-2 each, plus the stakes override flag.
/// relevance: 0 task-only / 1 incidental / 2 explicit disclosure.
/// specificity: 0 vague / 1 general / 2 specific (names, numbers, dates).
/// explicitness: 0 implied / 1 casual / 2 direct.
struct EvidenceScore {
    int relevance = 0;
    int specificity = 0;
    int explicitness = 0;
    bool stakes_flag = false;

    int total() const { return relevance + specificity + explicitness; }
    bool valid() const {
        auto in_range = [](int v) { return v >= 0 && v <= 2; };
        return in_range(relevance) && in_range(specificity) && in_range(explicitness);
    }
};

enum class Tier { Drop, Streamlined, Full };
enum class Scheme { TwoTier, ThreeTier };

std::string_view to_string(Tier tier);

struct RoutingDecision {
    Tier tier = Tier::Drop;
    Scheme scheme = Scheme::TwoTier;
};

/// Two-tier table: total <= 2 drops, total >= 3 gets full encoding. The
/// stakes flag plays no role here. Throws ValidationError on out-of-range
/// dimensions.
RoutingDecision route_two_tier(const EvidenceScore& score);

/// Three-tier table: 0-2 drop, 3-4 streamlined, 5-6 full, with the stakes
/// override forcing full encoding whenever total >= 3.
RoutingDecision route_three_tier(const EvidenceScore& score);

RoutingDecision route(const EvidenceScore& score, Scheme scheme);

/// Scoring judgment is pluggable; routing above is pure.
class SessionScorer {
public:
    virtual ~SessionScorer() = default;

    /// Rates a non-empty transcript on the rubric. Provider-backed
    /// implementations surface failures as ProviderError after exhausting
    /// their retries; callers requeue the session rather than dropping it.
    virtual EvidenceScore score(const SessionTranscript& session) = 0;
};

/// Reads ratings straight from the fixture annotations; used by every
/// deterministic test run.
class FixtureScorer : public SessionScorer {
public:
    EvidenceScore score(const SessionTranscript& session) override;
};

/// Asks the provider for a JSON rating and parses it strictly. Retries on
/// retryable provider failures and on malformed replies before giving up.
class ModelScorer : public SessionScorer {
public:
    explicit ModelScorer(provider::Provider& backend, int max_retries = 2);

    EvidenceScore score(const SessionTranscript& session) override;

private:
    provider::Provider& backend_;
    int max_retries_;
};

} // namespace dualtrace::gate
