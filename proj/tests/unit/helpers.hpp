// Shared builders for the unit suites. Every helper returns entries that
// already satisfy validate_entry / validate_pair so individual tests only
// perturb the field they care about.
#pragma once

#include <dualtrace/trace.hpp>

#include <random>
#include <string>
#include <vector>

namespace testutil {

inline dualtrace::UtcTimestamp ts(int y, int mo, int d, int h = 12, int mi = 0, int s = 0) {
    dualtrace::UtcTimestamp t;
    t.year = y;
    t.month = mo;
    t.day = d;
    t.hour = h;
    t.minute = mi;
    t.second = s;
    return t;
}

inline dualtrace::MemoryEntry make_fact(const std::string& slug = "car_maintenance_march",
                                        int score = 6) {
    dualtrace::MemoryEntry e;
    e.kind = dualtrace::TraceKind::Fact;
    e.anchor = dualtrace::Anchor(slug);
    e.frontmatter.info_type = "event";
    e.frontmatter.category = "vehicle";
    e.frontmatter.confidence = dualtrace::Confidence::High;
    e.frontmatter.evidence_score = score;
    e.frontmatter.timestamp = ts(2023, 3, 4);
    e.frontmatter.linked_scene = dualtrace::Anchor(slug);
    e.components = {"took the car in for brake service on 2023-03-04",
                    "garage replaced the front brake pads", "total bill was 240 dollars"};
    return e;
}

inline dualtrace::MemoryEntry make_scene(const std::string& slug = "car_maintenance_march",
                                         int score = 6) {
    dualtrace::MemoryEntry e;
    e.kind = dualtrace::TraceKind::Scene;
    e.anchor = dualtrace::Anchor(slug);
    e.frontmatter.info_type = "event";
    e.frontmatter.category = "vehicle";
    e.frontmatter.confidence = dualtrace::Confidence::High;
    e.frontmatter.evidence_score = score;
    e.frontmatter.timestamp = ts(2023, 3, 4);
    e.frontmatter.linked_fact = dualtrace::Anchor(slug);
    e.body = std::string(dualtrace::kPicturePrefix) +
             " a grease-stained service counter, fresh brake pads boxed on the shelf, a "
             "receipt reading 240 taped to the register.\n" +
             std::string(dualtrace::kSceneDisclaimer);
    return e;
}

// Deterministic generator used by round-trip property tests.
class EntryGenerator {
public:
    explicit EntryGenerator(unsigned seed) : rng_(seed) {}

    dualtrace::MemoryEntry next() {
        const bool fact = rng_() % 2 == 0;
        const std::string slug = random_slug();
        dualtrace::MemoryEntry e;
        e.kind = fact ? dualtrace::TraceKind::Fact : dualtrace::TraceKind::Scene;
        e.anchor = dualtrace::Anchor(slug);
        e.frontmatter.info_type = pick({"event", "preference", "identity", "plan"});
        e.frontmatter.category = pick({"vehicle", "career", "hobby", "admin", "health"});
        e.frontmatter.confidence =
            pick({dualtrace::Confidence::High, dualtrace::Confidence::Medium,
                  dualtrace::Confidence::Low});
        e.frontmatter.evidence_score = static_cast<int>(rng_() % 7);
        e.frontmatter.timestamp =
            ts(2020 + static_cast<int>(rng_() % 6), 1 + static_cast<int>(rng_() % 12),
               1 + static_cast<int>(rng_() % 28), static_cast<int>(rng_() % 24),
               static_cast<int>(rng_() % 60), static_cast<int>(rng_() % 60));
        if (fact) {
            if (rng_() % 2 == 0) e.frontmatter.linked_scene = dualtrace::Anchor(slug);
            const auto n = 1 + rng_() % 4;
            for (std::size_t i = 0; i < n; ++i) e.components.push_back(random_text());
        } else {
            if (rng_() % 2 == 0) e.frontmatter.linked_fact = dualtrace::Anchor(slug);
            std::string body = std::string(dualtrace::kPicturePrefix) + " " + random_text();
            const auto extra = rng_() % 3;
            for (std::size_t i = 0; i < extra; ++i) body += "\n" + random_text();
            body += "\n";
            body += dualtrace::kSceneDisclaimer;
            e.body = body;
        }
        return e;
    }

private:
    template <typename T>
    T pick(std::initializer_list<T> options) {
        auto it = options.begin();
        std::advance(it, rng_() % options.size());
        return *it;
    }

    std::string random_slug() {
        static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789_";
        const auto len = 3 + rng_() % 20;
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s += alphabet[rng_() % (sizeof(alphabet) - 1)];
        return s;
    }

    std::string random_text() {
        static const std::vector<std::string> words = {
            "garage", "receipt", "kayak",  "panel",  "ticket", "morning",
            "harbor", "ledger",  "window", "orange", "signal", "notebook"};
        const auto n = 2 + rng_() % 6;
        std::string s;
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += words[rng_() % words.size()];
        }
        return s;
    }

    std::mt19937 rng_;
};

} // namespace testutil
