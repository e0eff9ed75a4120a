// Coding-agent adaptation: four-dimension evidence scoring on a 0-12 scale,
// SKIP/RECORD/FULL routing, and the `Moment:` scene variant with labeled
// Timeline/Prior/After fields.
#pragma once

#include "dualtrace/store.hpp"
#include "dualtrace/timestamp.hpp"
#include "dualtrace/trace.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualtrace::code_trace {

/// Four code-specific dimensions, each rated 0-3.
struct CodeEvidenceScore {
    int durability = 0;
    int scope = 0;
    int rationale_richness = 0;
    int retrieval_likelihood = 0;

    int total() const { return durability + scope + rationale_richness + retrieval_likelihood; }
    bool valid() const {
        auto in_range = [](int v) { return v >= 0 && v <= 3; };
        return in_range(durability) && in_range(scope) && in_range(rationale_richness) &&
               in_range(retrieval_likelihood);
    }
};

enum class CodeTier { Skip, Record, Full };

std::string_view to_string(CodeTier tier);

/// 0-4 SKIP (native memory only), 5-7 RECORD (fact entry), 8-12 FULL
/// (fact + scene). Throws ValidationError on out-of-range dimensions.
CodeTier route_code(const CodeEvidenceScore& score);

/// Closed six-value set of code knowledge kinds.
enum class CodeInfoType { Decision, Incident, Convention, Pattern, LearningProgression, Preference };

std::string_view to_string(CodeInfoType kind);
std::optional<CodeInfoType> code_info_type_from_string(std::string_view text);

/// Scene material for FULL-tier items. `body` is the narrative (the
/// `Moment:` prefix is added when rendering if absent); `timeline` is the
/// ordered event list, required for incidents.
struct MomentScene {
    std::string body;
    std::vector<std::string> timeline;
    std::string prior;
    std::string after;
};

/// Renders the scene into the stored SCENE body slot:
///   Moment: <narrative>
///   Timeline: <event>      (one line per event)
///   Prior: <state before>
///   After: <state after>
///   <disclaimer>
std::string render_moment(const MomentScene& scene);

/// Strict inverse of render_moment over a stored scene body. Throws
/// ParseError (with a line locator) on missing prefix, out-of-order labels,
/// or a missing disclaimer.
MomentScene parse_moment(const std::string& body);

struct CodeKnowledgeItem {
    CodeInfoType kind = CodeInfoType::Decision;
    std::string topic;    // anchor proposal; empty falls back to the session id
    std::string category = "code";
    std::vector<std::string> facts;
    std::vector<std::string> artifacts; // paths / function names / error strings
    MomentScene scene;                  // consulted only at FULL tier
    UtcTimestamp timestamp;
};

struct CodeEncodeOutcome {
    CodeTier tier = CodeTier::Skip;
    store::SessionOutcome result = store::SessionOutcome::Dropped;
    std::optional<Anchor> anchor;
    bool updated = false; // an existing anchor was revised in place
};

/// Routes and stores one item. SKIP touches nothing. RECORD stores a fact
/// with info_type = kind and the 0-12 evidence score. FULL stores a
/// fact + Moment pair; every artifact string must appear in the rendered
/// scene body and incidents must carry a timeline (ValidationError
/// otherwise). When the derived anchor already exists the entries are
/// updated in place rather than suffixed into duplicates.
CodeEncodeOutcome encode_code_knowledge(const CodeKnowledgeItem& item,
                                        const CodeEvidenceScore& score, store::MemoryStore& store,
                                        const std::string& session_id);

} // namespace dualtrace::code_trace
