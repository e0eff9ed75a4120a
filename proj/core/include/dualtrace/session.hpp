// Session vocabulary shared by the gate, the encoding pipeline, and the
// harness. Fixture annotations carry the ratings and generator material that
// the deterministic mocks read instead of calling a model.
#pragma once

#include "dualtrace/timestamp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dualtrace {

struct SessionMessage {
    std::string role; // "user" / "assistant"
    std::string content;
};

/// Per-session fixture annotations: rubric ratings for the mock scorer plus
/// the topic/facts the mock trace generator emits.
struct SessionAnnotations {
    int relevance = 0;
    int specificity = 0;
    int explicitness = 0;
    bool stakes = false;
    std::string topic;     // proposed anchor phrase, e.g. "Car Maintenance (March)"
    std::string info_type; // e.g. "event"
    std::string category;  // e.g. "vehicle"
    std::vector<std::string> facts;
};

struct SessionTranscript {
    std::string id;
    UtcTimestamp date;
    std::vector<SessionMessage> messages;
    std::optional<SessionAnnotations> annotations;

    bool empty() const { return messages.empty(); }
};

} // namespace dualtrace
