// Three-state retrieval: answer with reconstructed scenes (A), facts only
// with an explicit no-fabrication instruction (B), or abstain without a
// backend call (C).
#pragma once

#include "dualtrace/store.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dualtrace::provider {
class Provider;
}

namespace dualtrace::retrieve {

/// The exact abstention sentence; state C answers are byte-identical to it.
inline constexpr std::string_view kAbstention = "I don't have that information stored.";

enum class State { A, B, C };
enum class AnswerConfidence { High, Medium, None };

std::string_view to_string(State state);

/// Pure classification over search results: A when some returned fact's
/// linked scene is also in the results, B when facts matched but no scene
/// resolves, C when nothing relevant matched.
State classify_state(const std::vector<store::SearchHit>& results);

struct RetrievalOutcome {
    State state = State::C;
    AnswerConfidence confidence = AnswerConfidence::None;
    std::vector<std::string> anchors; // distinct, in rank order
    std::vector<store::StoreRecord> evidence;
    std::string answer;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

/// Builds the backend prompt for states A/B. Exposed so callers can assert
/// prompt properties: state B prompts contain no scene material, and every
/// anchor cited exists in the evidence.
std::string build_answer_prompt(const std::string& question,
                                const std::vector<store::StoreRecord>& evidence, State state);

/// Full protocol: search, classify, then either prompt the backend (A/B) or
/// return the abstention sentence with no backend call (C). Multi-anchor
/// matches pull every pair in full and instruct explicit temporal ordering.
/// Dangling links in matched evidence surface as IntegrityError.
RetrievalOutcome answer_question(const std::string& question, const store::MemoryStore& store,
                                 provider::Provider& backend, std::size_t k = 10);

} // namespace dualtrace::retrieve
