#include "dualtrace/encode.hpp"

#include "dualtrace/errors.hpp"
#include "dualtrace/provider.hpp"

#include <json.hpp>

#include <cctype>
#include <functional>
#include <sstream>

namespace dualtrace::encode {

namespace {

std::string transcript_text(const SessionTranscript& session) {
    std::ostringstream out;
    for (const auto& msg : session.messages) {
        out << msg.role << ": " << msg.content << "\n";
    }
    return out.str();
}

// Entry confidence from the gate total: 5-6 high, 4 medium, 3 (the gate
// margin) low. Dropped sessions never reach this.
Confidence confidence_for_total(int total) {
    if (total >= 5) return Confidence::High;
    if (total >= 4) return Confidence::Medium;
    return Confidence::Low;
}

provider::Response call_with_retries(provider::Provider& backend, const provider::Request& req,
                                     int max_retries, GeneratedTraces& acc,
                                     const std::function<void(const std::string&)>& consume) {
    int attempts = 0;
    while (true) {
        ++attempts;
        try {
            provider::Response res = backend.generate(req);
            acc.prompt_tokens += res.prompt_tokens;
            acc.completion_tokens += res.completion_tokens;
            consume(res.text);
            return res;
        } catch (const ProviderError& err) {
            if (!err.retryable() || attempts > max_retries) throw;
        } catch (const ParseError&) {
            if (attempts > max_retries) {
                throw ProviderError("trace generation failed after " + std::to_string(attempts) +
                                        " attempts: malformed generator reply",
                                    true);
            }
        }
    }
}

} // namespace

GeneratedTraces MockTraceGenerator::generate(const SessionTranscript& session, bool want_scene) {
    if (!session.annotations) {
        throw ValidationError("mock trace generator requires annotated session '" + session.id + "'");
    }
    const SessionAnnotations& ann = *session.annotations;
    if (ann.facts.empty()) {
        throw ValidationError("mock trace generator: session '" + session.id + "' has no annotated facts");
    }

    // One pass through the provider so token accounting matches a real run.
    provider::Request req;
    req.messages.push_back({"system", "Extract the durable facts from this session."});
    req.messages.push_back({"user", transcript_text(session)});
    provider::Response res = backend_.generate(req);

    GeneratedTraces out;
    out.topic = ann.topic;
    out.info_type = ann.info_type.empty() ? "event" : ann.info_type;
    out.category = ann.category.empty() ? "general" : ann.category;
    out.facts = ann.facts;
    out.prompt_tokens = res.prompt_tokens;
    out.completion_tokens = res.completion_tokens;

    if (want_scene) {
        std::ostringstream scene;
        scene << kPicturePrefix << " the " << out.category << " moment of "
              << session.date.date() << ":";
        for (std::size_t i = 0; i < out.facts.size(); ++i) {
            scene << (i == 0 ? " " : "; ") << out.facts[i];
        }
        scene << ". A single held frame keeping the details fixed in place.\n"
              << kSceneDisclaimer;
        out.scene_body = scene.str();
    }
    return out;
}

GeneratedTraces ModelTraceGenerator::generate(const SessionTranscript& session, bool want_scene) {
    GeneratedTraces out;

    provider::Request extract;
    extract.messages.push_back(
        {"system",
         "You extract durable personal facts from a conversation session. Reply with strict JSON "
         "only: {\"topic\": \"short noun phrase\", \"info_type\": \"event|preference|decision|"
         "relationship|status\", \"category\": \"one word\", \"facts\": [\"component sentence\", ...]}. "
         "Each fact component must be a single self-contained sentence with explicit dates where known."});
    extract.messages.push_back({"user", transcript_text(session)});

    call_with_retries(backend_, extract, max_retries_, out, [&](const std::string& text) {
        auto open = text.find('{');
        auto close = text.rfind('}');
        if (open == std::string::npos || close == std::string::npos || close < open) {
            throw ParseError("no JSON object in generator reply", {});
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(text.substr(open, close - open + 1));
        } catch (const nlohmann::json::exception& err) {
            throw ParseError(std::string("bad generator JSON: ") + err.what(), {});
        }
        if (!parsed.contains("topic") || !parsed.contains("facts") || !parsed["facts"].is_array()) {
            throw ParseError("generator JSON missing topic/facts", {});
        }
        out.topic = parsed["topic"].get<std::string>();
        out.info_type = parsed.value("info_type", std::string("event"));
        out.category = parsed.value("category", std::string("general"));
        out.facts.clear();
        for (const auto& f : parsed["facts"]) {
            if (!f.is_string()) throw ParseError("fact component is not a string", {});
            out.facts.push_back(f.get<std::string>());
        }
        if (out.facts.empty()) throw ParseError("generator returned no fact components", {});
    });

    if (want_scene) {
        provider::Request scene;
        scene.messages.push_back(
            {"system",
             "You write one vivid mnemonic scene for the facts below: a single concrete moment with "
             "explicit temporal markers (dates or ordering words) and spatial layout. Begin with "
             "'Picture:' and end with the exact line '" +
                 std::string(kSceneDisclaimer) + "'. No blank lines."});
        std::ostringstream body;
        body << "Session date: " << session.date.date() << "\nFacts:\n";
        for (const auto& f : out.facts) body << "- " << f << "\n";
        scene.messages.push_back({"user", body.str()});

        call_with_retries(backend_, scene, max_retries_, out,
                          [&](const std::string& text) { out.scene_body = text; });
    }
    return out;
}

Anchor make_anchor(const std::string& session_id, const std::string& topic_proposal) {
    auto slugify = [](const std::string& text) {
        std::string slug;
        bool pending_sep = false;
        for (unsigned char c : text) {
            if (std::isalnum(c)) {
                if (pending_sep && !slug.empty()) slug.push_back('_');
                pending_sep = false;
                slug.push_back(static_cast<char>(std::tolower(c)));
            } else {
                pending_sep = true;
            }
        }
        if (slug.size() > 64) slug.resize(64);
        while (!slug.empty() && slug.back() == '_') slug.pop_back();
        return slug;
    };

    std::string slug = slugify(topic_proposal);
    if (slug.empty()) {
        slug = slugify("session " + session_id);
        if (slug.size() > 64) slug.resize(64);
        while (!slug.empty() && slug.back() == '_') slug.pop_back();
    }
    if (slug.empty()) throw ValidationError("cannot derive anchor: empty topic and session id");
    return Anchor(slug);
}

std::string repair_scene(std::string body) {
    // Normalize line endings and drop blank lines.
    std::string cleaned;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!cleaned.empty()) cleaned.push_back('\n');
        cleaned += line;
    }

    const std::string picture(kPicturePrefix);
    const std::string moment(kMomentPrefix);
    if (cleaned.rfind(picture, 0) != 0 && cleaned.rfind(moment, 0) != 0) {
        cleaned = picture + " " + cleaned;
    }
    const std::string disclaimer(kSceneDisclaimer);
    if (cleaned.size() < disclaimer.size() ||
        cleaned.compare(cleaned.size() - disclaimer.size(), disclaimer.size(), disclaimer) != 0) {
        cleaned += "\n" + disclaimer;
    }
    return cleaned;
}

PreparedEncode prepare_encode(const SessionTranscript& session, const ConditionConfig& config,
                              gate::SessionScorer& scorer, TraceGenerator& generator,
                              const CancelToken* cancel) {
    if (session.empty()) throw ValidationError("cannot encode empty session '" + session.id + "'");
    if (cancel && cancel->cancelled()) throw Cancelled();

    PreparedEncode prepared;
    prepared.score = scorer.score(session);
    prepared.decision = gate::route(prepared.score, config.routing_scheme);
    if (prepared.decision.tier == gate::Tier::Drop) return prepared;

    prepared.want_scene =
        prepared.decision.tier == gate::Tier::Full && config.condition == Condition::DualTrace;
    prepared.traces = generator.generate(session, prepared.want_scene);
    if (prepared.traces.facts.empty()) {
        throw ValidationError("generator produced no fact components for session '" + session.id + "'");
    }
    return prepared;
}

EncodeOutcome commit_encode(const SessionTranscript& session, const ConditionConfig& config,
                            const PreparedEncode& prepared, store::MemoryStore& store,
                            const CancelToken* cancel, bool mark_processed,
                            std::int64_t wall_seconds) {
    (void)config;
    EncodeOutcome outcome;
    outcome.tier = prepared.decision.tier;
    if (prepared.decision.tier == gate::Tier::Drop) {
        outcome.result = store::SessionOutcome::Dropped;
        if (mark_processed) {
            store::SessionLedgerEntry entry;
            entry.outcome = store::SessionOutcome::Dropped;
            entry.tier = std::string(gate::to_string(outcome.tier));
            entry.wall_seconds = wall_seconds;
            store.record_session_processed(session.id, std::move(entry));
        }
        return outcome;
    }

    const GeneratedTraces& gen = prepared.traces;
    const gate::EvidenceScore& score = prepared.score;
    const bool want_scene = prepared.want_scene;
    outcome.prompt_tokens = gen.prompt_tokens;
    outcome.completion_tokens = gen.completion_tokens;

    Anchor anchor = make_anchor(session.id, gen.topic);

    MemoryEntry fact;
    fact.kind = TraceKind::Fact;
    fact.anchor = anchor;
    fact.frontmatter.info_type = gen.info_type;
    fact.frontmatter.category = gen.category;
    fact.frontmatter.confidence = confidence_for_total(score.total());
    fact.frontmatter.evidence_score = score.total();
    fact.frontmatter.timestamp = session.date;
    fact.components = gen.facts;

    if (cancel && cancel->cancelled()) throw Cancelled();

    store::SessionLedgerEntry mark;
    mark.tier = std::string(gate::to_string(outcome.tier));
    mark.prompt_tokens = gen.prompt_tokens;
    mark.completion_tokens = gen.completion_tokens;
    mark.wall_seconds = wall_seconds;

    if (want_scene) {
        MemoryEntry scene;
        scene.kind = TraceKind::Scene;
        scene.anchor = anchor;
        scene.frontmatter = fact.frontmatter;
        scene.body = repair_scene(gen.scene_body);
        fact.frontmatter.linked_scene = anchor;
        scene.frontmatter.linked_fact = anchor;
        mark.outcome = store::SessionOutcome::PairStored;
        Anchor stored = store.insert_pair(fact, scene, session.id,
                                          mark_processed ? &mark : nullptr);
        outcome.result = store::SessionOutcome::PairStored;
        outcome.anchor = stored;
    } else {
        mark.outcome = store::SessionOutcome::FactStored;
        Anchor stored = store.insert_fact(fact, session.id, mark_processed ? &mark : nullptr);
        outcome.result = store::SessionOutcome::FactStored;
        outcome.anchor = stored;
    }
    return outcome;
}

EncodeOutcome encode_session(const SessionTranscript& session, const ConditionConfig& config,
                             gate::SessionScorer& scorer, TraceGenerator& generator,
                             store::MemoryStore& store, const CancelToken* cancel) {
    const PreparedEncode prepared = prepare_encode(session, config, scorer, generator, cancel);
    return commit_encode(session, config, prepared, store, cancel);
}

} // namespace dualtrace::encode
