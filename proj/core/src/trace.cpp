#include "dualtrace/trace.hpp"

#include "dualtrace/errors.hpp"

#include <sstream>

namespace dualtrace {

namespace {

constexpr std::size_t kMaxSlugLength = 64;

bool single_line(std::string_view s) {
    return s.find('\n') == std::string_view::npos && s.find('\r') == std::string_view::npos;
}

bool scene_prefix_ok(std::string_view body) {
    return body.starts_with(kPicturePrefix) || body.starts_with(kMomentPrefix);
}

} // namespace

std::string_view to_string(TraceKind kind) {
    return kind == TraceKind::Fact ? "FACT" : "SCENE";
}

std::string_view to_string(Confidence confidence) {
    switch (confidence) {
    case Confidence::High: return "high";
    case Confidence::Medium: return "medium";
    case Confidence::Low: return "low";
    }
    return "medium";
}

std::optional<Confidence> confidence_from_string(std::string_view text) {
    if (text == "high") return Confidence::High;
    if (text == "medium") return Confidence::Medium;
    if (text == "low") return Confidence::Low;
    return std::nullopt;
}

bool Anchor::valid_slug(std::string_view slug) {
    if (slug.empty() || slug.size() > kMaxSlugLength) return false;
    for (char c : slug) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

Anchor::Anchor(std::string slug) : slug_(std::move(slug)) {
    if (!valid_slug(slug_)) throw ValidationError("invalid anchor: '" + slug_ + "'");
}

std::vector<std::string> validate_entry(const MemoryEntry& entry) {
    std::vector<std::string> v;
    if (!Anchor::valid_slug(entry.anchor.str())) v.push_back("invalid anchor");
    if (entry.frontmatter.info_type.empty()) v.push_back("empty info_type");
    if (!single_line(entry.frontmatter.info_type)) v.push_back("info_type contains newline");
    if (entry.frontmatter.category.empty()) v.push_back("empty category");
    if (!single_line(entry.frontmatter.category)) v.push_back("category contains newline");
    if (entry.frontmatter.evidence_score < 0 || entry.frontmatter.evidence_score > 12)
        v.push_back("evidence_score out of range");
    if (!entry.frontmatter.timestamp.valid()) v.push_back("invalid timestamp");

    if (entry.kind == TraceKind::Fact) {
        if (entry.frontmatter.linked_fact) v.push_back("linked_fact on FACT entry");
        if (entry.components.empty()) v.push_back("FACT entry has no components");
        for (const auto& item : entry.components)
            if (!single_line(item)) {
                v.push_back("component contains newline");
                break;
            }
        if (!entry.body.empty()) v.push_back("FACT entry has a body");
    } else {
        if (entry.frontmatter.linked_scene) v.push_back("linked_scene on SCENE entry");
        if (!entry.components.empty()) v.push_back("SCENE entry has components");
        if (entry.body.empty()) {
            v.push_back("SCENE entry has no body");
        } else {
            if (!scene_prefix_ok(entry.body)) v.push_back("missing scene prefix");
            if (!entry.body.ends_with(kSceneDisclaimer)) v.push_back("missing disclaimer");
            if (entry.body.find("\n\n") != std::string::npos)
                v.push_back("blank line in scene body");
            if (entry.body.find('\r') != std::string::npos)
                v.push_back("carriage return in scene body");
            // The conversational rubric tops out at 6; only Moment scenes
            // use the 0-12 scale.
            if (entry.body.starts_with(kPicturePrefix) && entry.frontmatter.evidence_score > 6)
                v.push_back("evidence_score out of range");
        }
    }
    return v;
}

std::string serialize_entry(const MemoryEntry& entry) {
    auto violations = validate_entry(entry);
    if (!violations.empty()) throw ValidationError(violations.front());

    std::ostringstream out;
    out << '[' << to_string(entry.kind) << ':' << entry.anchor.str() << "]\n";
    out << "---\n";
    out << "info_type: " << entry.frontmatter.info_type << '\n';
    out << "category: " << entry.frontmatter.category << '\n';
    out << "confidence: " << to_string(entry.frontmatter.confidence) << '\n';
    out << "evidence_score: " << entry.frontmatter.evidence_score << '\n';
    out << "timestamp: " << entry.frontmatter.timestamp.to_string() << '\n';
    if (entry.frontmatter.linked_scene)
        out << "linked_scene: " << entry.frontmatter.linked_scene->str() << '\n';
    if (entry.frontmatter.linked_fact)
        out << "linked_fact: " << entry.frontmatter.linked_fact->str() << '\n';
    out << "---\n";
    if (entry.kind == TraceKind::Fact) {
        out << "Components:\n";
        for (const auto& item : entry.components) out << "- " << item << '\n';
    } else {
        out << entry.body << '\n';
    }
    return out.str();
}

namespace {

struct LineReader {
    std::string_view text;
    std::size_t pos = 0;
    int line_no = 0;

    bool done() const { return pos >= text.size(); }

    // Consumes the next line without its terminator. A final line with no
    // trailing newline still counts.
    std::string_view next() {
        const auto nl = text.find('\n', pos);
        std::string_view out;
        if (nl == std::string_view::npos) {
            out = text.substr(pos);
            pos = text.size();
        } else {
            out = text.substr(pos, nl - pos);
            pos = nl + 1;
        }
        ++line_no;
        return out;
    }
};

[[noreturn]] void fail(const std::string& msg, int line, std::string field = {}) {
    throw ParseError(msg, Locator{line, std::move(field)});
}

Anchor parse_anchor_value(std::string_view value, int line, const std::string& field) {
    if (!Anchor::valid_slug(value)) fail("invalid anchor", line, field);
    return Anchor(std::string(value));
}

} // namespace

MemoryEntry parse_entry(std::string_view text) {
    LineReader in{text};
    if (in.done()) fail("empty input", 0);

    // Tag line.
    const auto tag = in.next();
    MemoryEntry entry;
    std::string_view slug;
    if (tag.starts_with("[FACT:") && tag.ends_with("]")) {
        entry.kind = TraceKind::Fact;
        slug = tag.substr(6, tag.size() - 7);
    } else if (tag.starts_with("[SCENE:") && tag.ends_with("]")) {
        entry.kind = TraceKind::Scene;
        slug = tag.substr(7, tag.size() - 8);
    } else {
        fail("malformed tag line", in.line_no, "tag");
    }
    entry.anchor = parse_anchor_value(slug, in.line_no, "anchor");

    if (in.done() || in.next() != "---") fail("expected '---' after tag line", in.line_no);

    // Frontmatter, fixed key order; linked_* must match the entry kind.
    static constexpr std::string_view kOrder[] = {"info_type",      "category",  "confidence",
                                                  "evidence_score", "timestamp", "linked_scene",
                                                  "linked_fact"};
    std::size_t next_key = 0;
    bool saw_required[5] = {false, false, false, false, false};
    while (true) {
        if (in.done()) fail("unterminated frontmatter", in.line_no);
        const auto line = in.next();
        if (line == "---") break;
        const auto colon = line.find(": ");
        if (colon == std::string_view::npos) fail("malformed frontmatter line", in.line_no);
        const auto key = line.substr(0, colon);
        const auto value = line.substr(colon + 2);

        std::size_t key_index = next_key;
        while (key_index < std::size(kOrder) && kOrder[key_index] != key) ++key_index;
        if (key_index == std::size(kOrder)) {
            bool known = false;
            for (auto k : kOrder) known = known || k == key;
            fail(known ? "frontmatter key out of order" : "unknown frontmatter key", in.line_no,
                 std::string(key));
        }
        next_key = key_index + 1;

        if (key == "info_type") {
            entry.frontmatter.info_type = std::string(value);
            saw_required[0] = true;
        } else if (key == "category") {
            entry.frontmatter.category = std::string(value);
            saw_required[1] = true;
        } else if (key == "confidence") {
            const auto c = confidence_from_string(value);
            if (!c) fail("invalid confidence value", in.line_no, "confidence");
            entry.frontmatter.confidence = *c;
            saw_required[2] = true;
        } else if (key == "evidence_score") {
            int score = 0;
            bool digits = !value.empty();
            for (char ch : value) digits = digits && ch >= '0' && ch <= '9';
            if (digits && value.size() <= 2)
                score = (value.size() == 2) ? (value[0] - '0') * 10 + (value[1] - '0')
                                            : value[0] - '0';
            else
                fail("invalid evidence_score", in.line_no, "evidence_score");
            entry.frontmatter.evidence_score = score;
            saw_required[3] = true;
        } else if (key == "timestamp") {
            const auto ts = UtcTimestamp::parse(value);
            if (!ts) fail("invalid timestamp", in.line_no, "timestamp");
            entry.frontmatter.timestamp = *ts;
            saw_required[4] = true;
        } else if (key == "linked_scene") {
            if (entry.kind != TraceKind::Fact)
                fail("linked_scene on SCENE entry", in.line_no, "linked_scene");
            entry.frontmatter.linked_scene = parse_anchor_value(value, in.line_no, "linked_scene");
        } else if (key == "linked_fact") {
            if (entry.kind != TraceKind::Scene)
                fail("linked_fact on FACT entry", in.line_no, "linked_fact");
            entry.frontmatter.linked_fact = parse_anchor_value(value, in.line_no, "linked_fact");
        }
    }
    for (std::size_t i = 0; i < 5; ++i)
        if (!saw_required[i]) fail("missing frontmatter key", in.line_no, std::string(kOrder[i]));

    // Payload.
    if (entry.kind == TraceKind::Fact) {
        if (in.done() || in.next() != "Components:")
            fail("expected 'Components:' after frontmatter", in.line_no);
        while (!in.done()) {
            const auto line = in.next();
            if (line.empty()) fail("blank line after components", in.line_no);
            if (!line.starts_with("- ")) fail("malformed component line", in.line_no);
            entry.components.emplace_back(line.substr(2));
        }
        if (entry.components.empty()) fail("FACT entry has no components", in.line_no);
    } else {
        std::string body;
        while (!in.done()) {
            const auto line = in.next();
            if (line.empty()) fail("blank line in scene body", in.line_no);
            if (!body.empty()) body += '\n';
            body += line;
        }
        if (body.empty()) fail("SCENE entry has no body", in.line_no);
        if (!scene_prefix_ok(body)) fail("missing scene prefix", in.line_no, "body");
        if (!body.ends_with(kSceneDisclaimer)) fail("missing disclaimer", in.line_no, "body");
        entry.body = std::move(body);
    }

    auto violations = validate_entry(entry);
    if (!violations.empty()) fail(violations.front(), in.line_no);
    return entry;
}

PairReport validate_pair(const MemoryEntry& fact, const MemoryEntry& scene) {
    if (fact.kind != TraceKind::Fact) throw ValidationError("validate_pair: first entry not FACT");
    if (scene.kind != TraceKind::Scene)
        throw ValidationError("validate_pair: second entry not SCENE");

    PairReport report;
    if (fact.anchor != scene.anchor) report.violations.push_back("anchor mismatch");
    if (!fact.frontmatter.linked_scene)
        report.violations.push_back("missing forward-link");
    else if (*fact.frontmatter.linked_scene != scene.anchor)
        report.violations.push_back("forward-link mismatch");
    if (!scene.frontmatter.linked_fact)
        report.violations.push_back("missing back-link");
    else if (*scene.frontmatter.linked_fact != fact.anchor)
        report.violations.push_back("back-link mismatch");
    if (fact.frontmatter.evidence_score != scene.frontmatter.evidence_score)
        report.violations.push_back("evidence score mismatch");
    report.valid = report.violations.empty();
    return report;
}

} // namespace dualtrace
