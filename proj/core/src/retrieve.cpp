#include "dualtrace/retrieve.hpp"

#include "dualtrace/errors.hpp"
#include "dualtrace/provider.hpp"

#include <algorithm>
#include <sstream>

namespace dualtrace::retrieve {

std::string_view to_string(State state) {
    switch (state) {
    case State::A: return "A";
    case State::B: return "B";
    case State::C: return "C";
    }
    return "?";
}

State classify_state(const std::vector<store::SearchHit>& results) {
    bool any_fact = false;
    for (const auto& hit : results) {
        if (hit.record.entry.kind != TraceKind::Fact) continue;
        any_fact = true;
        if (!hit.record.entry.frontmatter.linked_scene) continue;
        for (const auto& other : results) {
            if (other.record.entry.kind == TraceKind::Scene &&
                other.record.entry.anchor.str() == hit.record.entry.anchor.str()) {
                return State::A;
            }
        }
    }
    return any_fact ? State::B : State::C;
}

std::string build_answer_prompt(const std::string& question,
                                const std::vector<store::StoreRecord>& evidence, State state) {
    if (state == State::C) {
        throw ValidationError("state C never builds a backend prompt");
    }

    std::size_t anchor_count = 0;
    {
        std::vector<std::string> seen;
        for (const auto& rec : evidence) {
            const std::string& a = rec.entry.anchor.str();
            if (std::find(seen.begin(), seen.end(), a) == seen.end()) seen.push_back(a);
        }
        anchor_count = seen.size();
    }

    std::ostringstream out;
    out << "You answer questions using only the retrieved memory entries below.\n\n"
        << "Retrieved memories:\n\n";
    for (const auto& rec : evidence) {
        out << serialize_entry(rec.entry) << "\n";
    }

    if (state == State::A) {
        out << "Reconstruct each scene in your mind to recover the episode's concrete "
               "details and temporal anchors before answering.\n";
        if (anchor_count >= 2) {
            out << "Multiple memories matched. Read every fact and scene pair in full and "
                   "establish the explicit temporal order of events before synthesizing "
                   "your answer.\n";
        }
    } else {
        out << "No scene traces are stored for these memories. Answer from the fact "
               "components alone; do not fabricate or hallucinate a scene.\n";
        if (anchor_count >= 2) {
            out << "Multiple memories matched. Read every fact in full and establish the "
                   "explicit temporal order of events before synthesizing your answer.\n";
        }
    }

    out << "\nQuestion: " << question << "\nAnswer using only the evidence above.\n";
    return out.str();
}

RetrievalOutcome answer_question(const std::string& question, const store::MemoryStore& store,
                                 provider::Provider& backend, std::size_t k) {
    RetrievalOutcome outcome;

    const auto hits = store.search(question, k);
    outcome.state = classify_state(hits);
    if (outcome.state == State::C) {
        outcome.confidence = AnswerConfidence::None;
        outcome.answer = std::string(kAbstention);
        return outcome;
    }

    // Pull each matched anchor's stored material in full, in rank order.
    // get_by_anchor surfaces dangling links as IntegrityError here rather
    // than letting a broken pair silently degrade the answer.
    for (const auto& hit : hits) {
        const std::string& a = hit.record.entry.anchor.str();
        if (std::find(outcome.anchors.begin(), outcome.anchors.end(), a) != outcome.anchors.end()) {
            continue;
        }
        outcome.anchors.push_back(a);
        auto pair = store.get_by_anchor(Anchor(a));
        if (!pair) {
            throw IntegrityError("search returned anchor '" + a + "' that no longer resolves");
        }
        outcome.evidence.push_back(pair->fact);
        if (outcome.state == State::A && pair->scene) outcome.evidence.push_back(*pair->scene);
    }

    const std::string prompt = build_answer_prompt(question, outcome.evidence, outcome.state);

    provider::Request req;
    req.messages.push_back({"user", prompt});
    provider::Response res = backend.generate(req);

    outcome.confidence =
        outcome.state == State::A ? AnswerConfidence::High : AnswerConfidence::Medium;
    outcome.answer = res.text;
    outcome.prompt_tokens = res.prompt_tokens;
    outcome.completion_tokens = res.completion_tokens;
    return outcome;
}

} // namespace dualtrace::retrieve
