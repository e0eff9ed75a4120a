#include <doctest.h>

#include <dualtrace/errors.hpp>
#include <dualtrace/timestamp.hpp>
#include <dualtrace/trace.hpp>

#include "helpers.hpp"

#include <set>

using namespace dualtrace;

TEST_SUITE("trace_model") {

    TEST_CASE("timestamp parses and formats the canonical form") {
        auto t = UtcTimestamp::parse("2023-03-04T12:00:00Z");
        REQUIRE(t.has_value());
        CHECK(t->year == 2023);
        CHECK(t->month == 3);
        CHECK(t->day == 4);
        CHECK(t->to_string() == "2023-03-04T12:00:00Z");
        CHECK(t->date() == "2023-03-04");
    }

    TEST_CASE("timestamp rejects malformed or impossible values") {
        CHECK_FALSE(UtcTimestamp::parse("2023-03-04 12:00:00Z").has_value());
        CHECK_FALSE(UtcTimestamp::parse("2023-03-04T12:00:00").has_value());
        CHECK_FALSE(UtcTimestamp::parse("2023-13-04T12:00:00Z").has_value());
        CHECK_FALSE(UtcTimestamp::parse("2023-02-29T00:00:00Z").has_value());
        CHECK(UtcTimestamp::parse("2024-02-29T00:00:00Z").has_value()); // leap year
        CHECK_FALSE(UtcTimestamp::parse("2023-04-31T00:00:00Z").has_value());
        CHECK_FALSE(UtcTimestamp::parse("").has_value());
    }

    TEST_CASE("timestamps order chronologically") {
        CHECK(testutil::ts(2023, 3, 20) < testutil::ts(2023, 5, 10));
        CHECK(testutil::ts(2023, 5, 10, 8) < testutil::ts(2023, 5, 10, 9));
    }

    TEST_CASE("anchor accepts snake_case slugs only") {
        CHECK(Anchor::valid_slug("car_maintenance_march"));
        CHECK(Anchor::valid_slug("a1_2b"));
        CHECK_FALSE(Anchor::valid_slug(""));
        CHECK_FALSE(Anchor::valid_slug("Car_Maintenance"));
        CHECK_FALSE(Anchor::valid_slug("has space"));
        CHECK_FALSE(Anchor::valid_slug("dash-ed"));
        CHECK_FALSE(Anchor::valid_slug(std::string(65, 'a')));
        CHECK(Anchor::valid_slug(std::string(64, 'a')));
        CHECK_THROWS_AS(Anchor("Nope"), ValidationError);
    }

    TEST_CASE("fact entries serialize to the exact tagged layout") {
        const auto fact = testutil::make_fact();
        const std::string expected =
            "[FACT:car_maintenance_march]\n"
            "---\n"
            "info_type: event\n"
            "category: vehicle\n"
            "confidence: high\n"
            "evidence_score: 6\n"
            "timestamp: 2023-03-04T12:00:00Z\n"
            "linked_scene: car_maintenance_march\n"
            "---\n"
            "Components:\n"
            "- took the car in for brake service on 2023-03-04\n"
            "- garage replaced the front brake pads\n"
            "- total bill was 240 dollars\n";
        CHECK(serialize_entry(fact) == expected);
    }

    TEST_CASE("scene entries serialize with prefix and closing disclaimer") {
        const auto scene = testutil::make_scene();
        const auto text = serialize_entry(scene);
        CHECK(text.starts_with("[SCENE:car_maintenance_march]\n"));
        CHECK(text.find("linked_fact: car_maintenance_march\n") != std::string::npos);
        CHECK(text.find("\nPicture: ") != std::string::npos);
        CHECK(text.ends_with(std::string(kSceneDisclaimer) + "\n"));
    }

    TEST_CASE("serialize/parse round-trips across generated entries") {
        testutil::EntryGenerator gen(1234);
        std::set<std::string> seen;
        for (int i = 0; i < 200; ++i) {
            const auto entry = gen.next();
            const auto text = serialize_entry(entry);
            const auto back = parse_entry(text);
            CHECK(back.kind == entry.kind);
            CHECK(back.anchor == entry.anchor);
            CHECK(back.frontmatter.info_type == entry.frontmatter.info_type);
            CHECK(back.frontmatter.category == entry.frontmatter.category);
            CHECK(back.frontmatter.confidence == entry.frontmatter.confidence);
            CHECK(back.frontmatter.evidence_score == entry.frontmatter.evidence_score);
            CHECK(back.frontmatter.timestamp == entry.frontmatter.timestamp);
            CHECK(back.frontmatter.linked_scene == entry.frontmatter.linked_scene);
            CHECK(back.frontmatter.linked_fact == entry.frontmatter.linked_fact);
            CHECK(back.components == entry.components);
            CHECK(back.body == entry.body);
            // Injectivity: re-serializing the parse must reproduce the bytes.
            CHECK(serialize_entry(back) == text);
            seen.insert(text);
        }
        CHECK(seen.size() > 150); // generator actually varies its output
    }

    TEST_CASE("validate_entry flags kind-specific violations") {
        auto fact = testutil::make_fact();
        fact.components.clear();
        auto v = validate_entry(fact);
        CHECK(std::find(v.begin(), v.end(), "FACT entry has no components") != v.end());

        auto scene = testutil::make_scene();
        scene.body = "Picture: no closing line";
        v = validate_entry(scene);
        CHECK(std::find(v.begin(), v.end(), "missing disclaimer") != v.end());

        scene = testutil::make_scene();
        scene.body = "Just text\n" + std::string(kSceneDisclaimer);
        v = validate_entry(scene);
        CHECK(std::find(v.begin(), v.end(), "missing scene prefix") != v.end());

        scene = testutil::make_scene();
        scene.frontmatter.evidence_score = 7; // Picture scenes cap at 6
        v = validate_entry(scene);
        CHECK(std::find(v.begin(), v.end(), "evidence_score out of range") != v.end());

        fact = testutil::make_fact();
        fact.frontmatter.linked_fact = Anchor("oops");
        v = validate_entry(fact);
        CHECK(std::find(v.begin(), v.end(), "linked_fact on FACT entry") != v.end());

        fact = testutil::make_fact();
        fact.components[0] = "line one\nline two";
        CHECK_THROWS_AS(serialize_entry(fact), ValidationError);
    }

    TEST_CASE("parse_entry reports the offending line") {
        const std::string missing_disclaimer =
            "[SCENE:kayak_restoration]\n---\ninfo_type: event\ncategory: hobby\n"
            "confidence: high\nevidence_score: 5\ntimestamp: 2023-05-10T12:00:00Z\n---\n"
            "Picture: hull dust in the sun\n";
        CHECK_THROWS_WITH_AS(parse_entry(missing_disclaimer), doctest::Contains("missing disclaimer"),
                             ParseError);
        try {
            parse_entry(missing_disclaimer);
        } catch (const ParseError& e) {
            CHECK(e.where().line == 9);
            CHECK(e.where().field == "body");
        }

        CHECK_THROWS_AS(parse_entry("not a tag line\n"), ParseError);
        CHECK_THROWS_AS(parse_entry("[FACT:Bad-Slug]\n"), ParseError);
        CHECK_THROWS_AS(parse_entry(""), ParseError);
    }

    TEST_CASE("parse_entry enforces the fixed frontmatter key order") {
        const std::string out_of_order =
            "[FACT:x1]\n---\ncategory: hobby\ninfo_type: event\nconfidence: high\n"
            "evidence_score: 5\ntimestamp: 2023-05-10T12:00:00Z\n---\nComponents:\n- a\n";
        CHECK_THROWS_WITH_AS(parse_entry(out_of_order), doctest::Contains("frontmatter key out of order"),
                             ParseError);

        const std::string unknown_key =
            "[FACT:x1]\n---\ninfo_type: event\ncategory: hobby\nconfidence: high\n"
            "evidence_score: 5\ntimestamp: 2023-05-10T12:00:00Z\nmood: blue\n---\n"
            "Components:\n- a\n";
        CHECK_THROWS_WITH_AS(parse_entry(unknown_key), doctest::Contains("unknown frontmatter key"),
                             ParseError);

        const std::string missing_key =
            "[FACT:x1]\n---\ninfo_type: event\ncategory: hobby\nconfidence: high\n"
            "timestamp: 2023-05-10T12:00:00Z\n---\nComponents:\n- a\n";
        CHECK_THROWS_WITH_AS(parse_entry(missing_key), doctest::Contains("missing frontmatter key"),
                             ParseError);
    }

    TEST_CASE("parse_entry rejects cross-links on the wrong kind") {
        const std::string fact_with_backlink =
            "[FACT:x1]\n---\ninfo_type: event\ncategory: hobby\nconfidence: high\n"
            "evidence_score: 5\ntimestamp: 2023-05-10T12:00:00Z\nlinked_fact: x1\n---\n"
            "Components:\n- a\n";
        CHECK_THROWS_WITH_AS(parse_entry(fact_with_backlink), doctest::Contains("linked_fact on FACT entry"),
                             ParseError);
    }

    TEST_CASE("parse_entry rejects trailing garbage and blank payload lines") {
        auto text = serialize_entry(testutil::make_fact());
        CHECK_THROWS_AS(parse_entry(text + "stray\n"), ParseError);
        CHECK_THROWS_AS(parse_entry(text + "\n"), ParseError);
        auto scene_text = serialize_entry(testutil::make_scene());
        CHECK_THROWS_AS(parse_entry(scene_text + "\n"), ParseError);
    }

    TEST_CASE("validate_pair accepts a reciprocal pair") {
        const auto report = validate_pair(testutil::make_fact(), testutil::make_scene());
        CHECK(report.valid);
        CHECK(report.violations.empty());
    }

    TEST_CASE("validate_pair lists each broken invariant") {
        auto fact = testutil::make_fact();
        auto scene = testutil::make_scene();

        scene.frontmatter.evidence_score = 4;
        auto report = validate_pair(fact, scene);
        CHECK_FALSE(report.valid);
        CHECK(std::find(report.violations.begin(), report.violations.end(),
                        "evidence score mismatch") != report.violations.end());

        scene = testutil::make_scene();
        scene.frontmatter.linked_fact.reset();
        report = validate_pair(fact, scene);
        CHECK_FALSE(report.valid);
        CHECK(std::find(report.violations.begin(), report.violations.end(),
                        "missing back-link") != report.violations.end());

        fact = testutil::make_fact("other_anchor");
        fact.frontmatter.linked_scene = Anchor("other_anchor");
        report = validate_pair(fact, testutil::make_scene());
        CHECK_FALSE(report.valid);
        CHECK(report.violations.size() >= 2); // anchor mismatch plus broken links
    }

    TEST_CASE("validate_pair rejects wrong kinds outright") {
        CHECK_THROWS_AS(validate_pair(testutil::make_scene(), testutil::make_fact()),
                        ValidationError);
    }
}
