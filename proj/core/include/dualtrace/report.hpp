// Paired-condition comparison reports: joins two grade files on their common
// question ids, runs the agreement/McNemar/bootstrap battery, and renders the
// result as markdown or JSON.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <dualtrace/harness.hpp>
#include <dualtrace/stats.hpp>

namespace dualtrace::report {

struct CategoryRow {
    std::string category;
    std::size_t n = 0; // questions graded under both conditions
    std::size_t a_correct = 0;
    std::size_t b_correct = 0;
    stats::BootstrapResult bootstrap;
    bool bootstrapped = false; // false when the category had fewer than 2 pairs

    double a_percent() const { return n == 0 ? 0.0 : 100.0 * static_cast<double>(a_correct) / static_cast<double>(n); }
    double b_percent() const { return n == 0 ? 0.0 : 100.0 * static_cast<double>(b_correct) / static_cast<double>(n); }
};

struct ComparisonReport {
    std::string a_label;
    std::string b_label;
    std::size_t a_graded = 0; // grades present in each input file
    std::size_t b_graded = 0;
    CategoryRow overall; // category label "overall"
    std::vector<CategoryRow> categories;
    std::vector<std::string> skipped_categories;
    stats::AgreementTable agreement;
    bool mcnemar_defined = false; // false when there are no discordant pairs
    stats::McNemarResult mcnemar;
};

/// Compares two grade sets over the intersection of their question ids.
/// Grades missing from either side are simply not paired (the counts still
/// appear in a_graded/b_graded so the report can show the asymmetry).
/// Category labels must agree for a shared id; a conflict is a
/// ValidationError, as are duplicate ids within one input and an
/// intersection smaller than 2.
ComparisonReport compare_grades(const std::vector<harness::GradedAnswer>& a,
                                const std::vector<harness::GradedAnswer>& b,
                                const std::string& a_label = "A",
                                const std::string& b_label = "B",
                                std::size_t resamples = 10000, std::uint64_t seed = 42);

/// One-condition accuracy summary for the non-compare report path.
std::string render_accuracy_markdown(const harness::AccuracyTable& table,
                                     const std::string& label);
std::string render_accuracy_json(const harness::AccuracyTable& table, const std::string& label);

/// Per-category accuracy/delta/CI/p table plus the agreement table and
/// McNemar line.
std::string render_markdown(const ComparisonReport& report);

/// Same content as a single JSON object (serialized with 2-space indent).
std::string render_json(const ComparisonReport& report);

} // namespace dualtrace::report
