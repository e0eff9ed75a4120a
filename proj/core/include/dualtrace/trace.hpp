#pragma once

#include "dualtrace/timestamp.hpp"

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualtrace {

/// Every scene trace ends with this exact string so downstream readers
/// never mistake a reconstructed scene for verified fact.
inline constexpr std::string_view kSceneDisclaimer = "(Mnemonic depiction only. Not evidence.)";

/// Scene body prefixes. Conversational scenes open with "Picture:",
/// coding scenes with "Moment:".
inline constexpr std::string_view kPicturePrefix = "Picture:";
inline constexpr std::string_view kMomentPrefix = "Moment:";

enum class TraceKind { Fact, Scene };

enum class Confidence { High, Medium, Low };

std::string_view to_string(TraceKind kind);
std::string_view to_string(Confidence confidence);
std::optional<Confidence> confidence_from_string(std::string_view text);

/// Descriptive slug shared by a fact trace and its paired scene trace,
/// e.g. `car_maintenance_march`. Lowercase letters, digits and
/// underscores only, at most 64 characters.
class Anchor {
public:
    Anchor() = default;

    /// Throws ValidationError if `slug` breaks the slug rules.
    explicit Anchor(std::string slug);

    static bool valid_slug(std::string_view slug);

    const std::string& str() const { return slug_; }
    bool empty() const { return slug_.empty(); }

    bool operator==(const Anchor&) const = default;
    auto operator<=>(const Anchor&) const = default;

private:
    std::string slug_;
};

/// Metadata block carried by every trace. Facts may link forward to
/// their scene (linked_scene); scenes may link back to their fact
/// (linked_fact); never the other way around.
struct Frontmatter {
    std::string info_type;
    std::string category;
    Confidence confidence = Confidence::Medium;
    int evidence_score = 0;
    UtcTimestamp timestamp;
    std::optional<Anchor> linked_scene;
    std::optional<Anchor> linked_fact;

    bool operator==(const Frontmatter&) const = default;
};

/// One stored trace. Facts carry a Components list of detail strings and
/// no body; scenes carry a narrative body (prefix + disclaimer enforced)
/// and no components.
struct MemoryEntry {
    TraceKind kind = TraceKind::Fact;
    Anchor anchor;
    Frontmatter frontmatter;
    std::vector<std::string> components;
    std::string body;

    bool operator==(const MemoryEntry&) const = default;
};

/// All structural rules the entry breaks, empty when valid. Serialization
/// refuses invalid entries; the store refuses to admit them.
std::vector<std::string> validate_entry(const MemoryEntry& entry);

/// Deterministic text form:
///
///   [FACT:slug]                      [SCENE:slug]
///   ---                              ---
///   info_type: ...                   (same keys, linked_fact instead
///   category: ...                     of linked_scene)
///   confidence: high|medium|low      ---
///   evidence_score: N                Picture: ... (disclaimer)
///   timestamp: YYYY-MM-DDTHH:MM:SSZ
///   linked_scene: slug        (optional)
///   ---
///   Components:
///   - detail
///
/// Keys appear in that fixed order; output ends with a single trailing
/// newline. Injective over valid entries: equal bytes iff equal entries.
/// Throws ValidationError when the entry fails validate_entry.
std::string serialize_entry(const MemoryEntry& entry);

/// Inverse of serialize_entry. Throws ParseError with a line/field
/// locator on malformed text; the result always satisfies
/// validate_entry and re-serializes byte-identically.
MemoryEntry parse_entry(std::string_view text);

/// Pair linkage report from validate_pair.
struct PairReport {
    bool valid = false;
    std::vector<std::string> violations;
};

/// Checks that `fact` and `scene` form a well-linked pair: same anchor,
/// reciprocal linked_scene/linked_fact, matching evidence scores.
/// Throws ValidationError if the kinds are wrong; every other problem is
/// listed in the report.
PairReport validate_pair(const MemoryEntry& fact, const MemoryEntry& scene);

} // namespace dualtrace
