#include "dualtrace/code_trace.hpp"

#include "dualtrace/encode.hpp"
#include "dualtrace/errors.hpp"

#include <sstream>

namespace dualtrace::code_trace {

std::string_view to_string(CodeTier tier) {
    switch (tier) {
    case CodeTier::Skip: return "SKIP";
    case CodeTier::Record: return "RECORD";
    case CodeTier::Full: return "FULL";
    }
    return "?";
}

CodeTier route_code(const CodeEvidenceScore& score) {
    if (!score.valid()) {
        throw ValidationError("code evidence dimensions must each be in [0,3]");
    }
    const int total = score.total();
    if (total <= 4) return CodeTier::Skip;
    if (total <= 7) return CodeTier::Record;
    return CodeTier::Full;
}

std::string_view to_string(CodeInfoType kind) {
    switch (kind) {
    case CodeInfoType::Decision: return "decision";
    case CodeInfoType::Incident: return "incident";
    case CodeInfoType::Convention: return "convention";
    case CodeInfoType::Pattern: return "pattern";
    case CodeInfoType::LearningProgression: return "learning_progression";
    case CodeInfoType::Preference: return "preference";
    }
    return "?";
}

std::optional<CodeInfoType> code_info_type_from_string(std::string_view text) {
    if (text == "decision") return CodeInfoType::Decision;
    if (text == "incident") return CodeInfoType::Incident;
    if (text == "convention") return CodeInfoType::Convention;
    if (text == "pattern") return CodeInfoType::Pattern;
    if (text == "learning_progression") return CodeInfoType::LearningProgression;
    if (text == "preference") return CodeInfoType::Preference;
    return std::nullopt;
}

std::string render_moment(const MomentScene& scene) {
    std::ostringstream out;
    const std::string prefix(kMomentPrefix);
    if (scene.body.rfind(prefix, 0) == 0) {
        out << scene.body;
    } else {
        out << prefix << " " << scene.body;
    }
    for (const auto& event : scene.timeline) {
        out << "\nTimeline: " << event;
    }
    out << "\nPrior: " << scene.prior;
    out << "\nAfter: " << scene.after;
    out << "\n" << kSceneDisclaimer;
    return out.str();
}

MomentScene parse_moment(const std::string& body) {
    std::vector<std::string> lines;
    {
        std::istringstream in(body);
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    if (lines.empty()) throw ParseError("empty scene body", {1, "body"});

    const std::string prefix(kMomentPrefix);
    if (lines.front().rfind(prefix, 0) != 0) {
        throw ParseError("scene body does not start with '" + prefix + "'", {1, "body"});
    }
    if (lines.back() != kSceneDisclaimer) {
        throw ParseError("scene body missing disclaimer line", {static_cast<int>(lines.size()), "body"});
    }

    MomentScene scene;
    scene.body = lines.front().substr(prefix.size());
    if (!scene.body.empty() && scene.body.front() == ' ') scene.body.erase(0, 1);

    // narrative continuation -> Timeline* -> Prior -> After -> disclaimer
    enum class Section { Narrative, Timeline, Prior, After };
    Section section = Section::Narrative;
    for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
        const std::string& line = lines[i];
        const int lineno = static_cast<int>(i) + 1;
        if (line.rfind("Timeline: ", 0) == 0) {
            if (section > Section::Timeline) {
                throw ParseError("Timeline line after Prior/After", {lineno, "timeline"});
            }
            section = Section::Timeline;
            scene.timeline.push_back(line.substr(10));
        } else if (line.rfind("Prior: ", 0) == 0 || line == "Prior:") {
            if (section >= Section::Prior) {
                throw ParseError("duplicate or misplaced Prior line", {lineno, "prior"});
            }
            section = Section::Prior;
            scene.prior = line.size() > 6 ? line.substr(7) : "";
        } else if (line.rfind("After: ", 0) == 0 || line == "After:") {
            if (section != Section::Prior) {
                throw ParseError("After line must follow Prior", {lineno, "after"});
            }
            section = Section::After;
            scene.after = line.size() > 6 ? line.substr(7) : "";
        } else {
            if (section != Section::Narrative) {
                throw ParseError("unlabeled line after labeled fields", {lineno, "body"});
            }
            scene.body += "\n" + line;
        }
    }
    if (section != Section::After) {
        throw ParseError("scene body missing Prior/After lines", {static_cast<int>(lines.size()), "body"});
    }
    return scene;
}

CodeEncodeOutcome encode_code_knowledge(const CodeKnowledgeItem& item,
                                        const CodeEvidenceScore& score, store::MemoryStore& store,
                                        const std::string& session_id) {
    CodeEncodeOutcome outcome;
    outcome.tier = route_code(score);
    if (outcome.tier == CodeTier::Skip) {
        outcome.result = store::SessionOutcome::Dropped;
        return outcome;
    }

    if (item.facts.empty()) {
        throw ValidationError("code knowledge item needs at least one fact component");
    }
    if (item.category.empty()) throw ValidationError("code knowledge item needs a category");

    const Anchor anchor = encode::make_anchor(session_id, item.topic);
    const bool exists = store.contains(anchor);

    MemoryEntry fact;
    fact.kind = TraceKind::Fact;
    fact.anchor = anchor;
    fact.frontmatter.info_type = std::string(to_string(item.kind));
    fact.frontmatter.category = item.category;
    fact.frontmatter.confidence =
        outcome.tier == CodeTier::Full ? Confidence::High : Confidence::Medium;
    fact.frontmatter.evidence_score = score.total();
    fact.frontmatter.timestamp = item.timestamp;
    fact.components = item.facts;

    if (outcome.tier == CodeTier::Record) {
        outcome.anchor = exists ? store.update_fact(fact, session_id)
                                : store.insert_fact(fact, session_id);
        outcome.result = store::SessionOutcome::FactStored;
        outcome.updated = exists;
        return outcome;
    }

    if (item.kind == CodeInfoType::Incident && item.scene.timeline.empty()) {
        throw ValidationError("incident scenes require a non-empty timeline");
    }

    MemoryEntry scene;
    scene.kind = TraceKind::Scene;
    scene.anchor = anchor;
    scene.frontmatter = fact.frontmatter;
    scene.body = render_moment(item.scene);
    for (const auto& artifact : item.artifacts) {
        if (scene.body.find(artifact) == std::string::npos) {
            throw ValidationError("artifact '" + artifact + "' is not referenced in the scene body");
        }
    }
    fact.frontmatter.linked_scene = anchor;
    scene.frontmatter.linked_fact = anchor;

    outcome.anchor = exists ? store.update_pair(fact, scene, session_id)
                            : store.insert_pair(fact, scene, session_id);
    outcome.result = store::SessionOutcome::PairStored;
    outcome.updated = exists;
    return outcome;
}

} // namespace dualtrace::code_trace
