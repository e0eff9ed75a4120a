#include "dualtrace/gate.hpp"

#include "dualtrace/errors.hpp"
#include "dualtrace/provider.hpp"

#include <json.hpp>

namespace dualtrace::gate {

namespace {

void require_valid(const EvidenceScore& score) {
    if (!score.valid()) throw ValidationError("evidence dimension out of range");
}

} // namespace

std::string_view to_string(Tier tier) {
    switch (tier) {
    case Tier::Drop: return "DROP";
    case Tier::Streamlined: return "STREAMLINED";
    case Tier::Full: return "FULL";
    }
    return "DROP";
}

RoutingDecision route_two_tier(const EvidenceScore& score) {
    require_valid(score);
    // Stakes play no role under the simplified scheme.
    return {score.total() <= 2 ? Tier::Drop : Tier::Full, Scheme::TwoTier};
}

RoutingDecision route_three_tier(const EvidenceScore& score) {
    require_valid(score);
    const int total = score.total();
    Tier tier;
    if (total <= 2)
        tier = Tier::Drop;
    else if (score.stakes_flag)
        tier = Tier::Full; // stakes override, only at total >= 3
    else if (total <= 4)
        tier = Tier::Streamlined;
    else
        tier = Tier::Full;
    return {tier, Scheme::ThreeTier};
}

RoutingDecision route(const EvidenceScore& score, Scheme scheme) {
    return scheme == Scheme::TwoTier ? route_two_tier(score) : route_three_tier(score);
}

EvidenceScore FixtureScorer::score(const SessionTranscript& session) {
    if (session.empty()) throw ValidationError("empty transcript");
    if (!session.annotations)
        throw ValidationError("session '" + session.id + "' has no fixture annotations");
    const auto& a = *session.annotations;
    EvidenceScore s{a.relevance, a.specificity, a.explicitness, a.stakes};
    require_valid(s);
    return s;
}

ModelScorer::ModelScorer(provider::Provider& backend, int max_retries)
    : backend_(backend), max_retries_(max_retries) {}

namespace {

EvidenceScore parse_rating(const std::string& reply) {
    // Models tend to wrap JSON in prose; take the outermost braces.
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw ParseError("no JSON object in scorer reply", {});
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(reply.substr(open, close - open + 1));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scorer reply: ") + e.what(), {});
    }
    EvidenceScore s;
    try {
        s.relevance = parsed.at("relevance").get<int>();
        s.specificity = parsed.at("specificity").get<int>();
        s.explicitness = parsed.at("explicitness").get<int>();
        s.stakes_flag = parsed.value("stakes", false);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scorer reply: ") + e.what(), {});
    }
    if (!s.valid()) throw ParseError("scorer rating out of range", {});
    return s;
}

} // namespace

EvidenceScore ModelScorer::score(const SessionTranscript& session) {
    if (session.empty()) throw ValidationError("empty transcript");

    provider::Request request;
    request.messages.push_back(
        {"system",
         "You rate a conversation session for long-term memory storage. Rate three "
         "dimensions 0-2: relevance (0 task-only, 1 incidental personal detail, 2 explicit "
         "personal disclosure), specificity (0 vague, 1 general, 2 specific with names, "
         "numbers, dates, or events), explicitness (0 implied, 1 casual mention, 2 direct "
         "statement). Set stakes true only for discrete items with real-world retrieval "
         "consequences. Reply with exactly one JSON object: "
         "{\"relevance\":N,\"specificity\":N,\"explicitness\":N,\"stakes\":false}"});
    std::string transcript = "Session " + session.id + " (" + session.date.date() + "):\n";
    for (const auto& m : session.messages) transcript += m.role + ": " + m.content + "\n";
    request.messages.push_back({"user", std::move(transcript)});
    request.max_tokens = 128;

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        try {
            return parse_rating(backend_.generate(request).text);
        } catch (const ProviderError& e) {
            if (!e.retryable()) throw;
            last_error = e.what();
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw ProviderError("scoring failed after " + std::to_string(max_retries_ + 1) +
                            " attempts: " + last_error,
                        true);
}

} // namespace dualtrace::gate
