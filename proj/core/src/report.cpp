#include <dualtrace/report.hpp>

#include <dualtrace/errors.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace dualtrace::report {

namespace {

using nlohmann::ordered_json;

// Benchmark categories print in the conventional order; anything else
// follows alphabetically.
const std::vector<std::string> kCanonicalOrder = {
    "single_session", "multi_session", "knowledge_update", "temporal", "abstention"};

std::vector<std::string> ordered_labels(const std::set<std::string>& labels) {
    std::vector<std::string> ordered;
    for (const auto& label : kCanonicalOrder)
        if (labels.count(label)) ordered.push_back(label);
    for (const auto& label : labels)
        if (std::find(kCanonicalOrder.begin(), kCanonicalOrder.end(), label) ==
            kCanonicalOrder.end())
            ordered.push_back(label);
    return ordered;
}

std::string fmt(const char* spec, double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), spec, value);
    return buffer;
}

std::string fmt1(double value) { return fmt("%.1f", value); }

// Signed one-decimal, but a delta that rounds to zero prints as plain 0.0.
std::string fmt_signed(double value) {
    if (std::abs(value) < 0.05) return "0.0";
    return fmt("%+.1f", value);
}

std::string fmt_p(double p) {
    if (p < 1e-4) return "<0.0001";
    auto text = fmt("%.4f", p);
    while (text.size() > 3 && text.back() == '0') text.pop_back();
    return text;
}

std::string ci_text(const stats::BootstrapResult& bootstrap) {
    return "[" + fmt("%+.1f", bootstrap.ci_low_pp) + ", " + fmt("%+.1f", bootstrap.ci_high_pp) +
           "]";
}

void append_row(std::ostringstream& out, const CategoryRow& row) {
    out << "| " << row.category << " | " << row.n << " | " << fmt1(row.a_percent()) << " | "
        << fmt1(row.b_percent()) << " | ";
    if (row.bootstrapped) {
        out << fmt_signed(row.bootstrap.point_delta_pp) << " | " << ci_text(row.bootstrap)
            << " | " << fmt_p(row.bootstrap.p_one_sided);
    } else {
        out << "— | — | —";
    }
    out << " |\n";
}

ordered_json row_json(const CategoryRow& row) {
    ordered_json value;
    value["category"] = row.category;
    value["n"] = row.n;
    value["a_correct"] = row.a_correct;
    value["b_correct"] = row.b_correct;
    value["a_percent"] = row.a_percent();
    value["b_percent"] = row.b_percent();
    value["bootstrapped"] = row.bootstrapped;
    if (row.bootstrapped) {
        value["delta_pp"] = row.bootstrap.point_delta_pp;
        value["ci_low_pp"] = row.bootstrap.ci_low_pp;
        value["ci_high_pp"] = row.bootstrap.ci_high_pp;
        value["p_one_sided"] = row.bootstrap.p_one_sided;
        value["resamples"] = row.bootstrap.resamples;
        value["seed"] = row.bootstrap.seed;
    }
    return value;
}

} // namespace

ComparisonReport compare_grades(const std::vector<harness::GradedAnswer>& a,
                                const std::vector<harness::GradedAnswer>& b,
                                const std::string& a_label, const std::string& b_label,
                                std::size_t resamples, std::uint64_t seed) {
    auto index = [](const std::vector<harness::GradedAnswer>& grades, const char* side) {
        std::unordered_map<std::string, const harness::GradedAnswer*> by_id;
        for (const auto& grade : grades)
            if (!by_id.emplace(grade.question_id, &grade).second)
                throw ValidationError(std::string("duplicate question id '") + grade.question_id +
                                      "' in " + side + " grades");
        return by_id;
    };
    index(a, "condition A"); // duplicate check only; pairing walks `a` in order
    const auto b_by_id = index(b, "condition B");

    // Intersection of graded ids, in A's order for deterministic resampling.
    std::vector<stats::PairedOutcome> outcomes;
    for (const auto& grade : a) {
        const auto found = b_by_id.find(grade.question_id);
        if (found == b_by_id.end()) continue;
        const auto& other = *found->second;
        if (!grade.category.empty() && !other.category.empty() &&
            grade.category != other.category)
            throw ValidationError("question '" + grade.question_id +
                                  "' is categorized '" + grade.category + "' vs '" +
                                  other.category + "' across the two grade files");
        stats::PairedOutcome outcome;
        outcome.question_id = grade.question_id;
        outcome.a_correct = grade.correct;
        outcome.b_correct = other.correct;
        outcome.category = grade.category.empty() ? other.category : grade.category;
        outcomes.push_back(std::move(outcome));
    }
    if (outcomes.size() < 2)
        throw ValidationError("only " + std::to_string(outcomes.size()) +
                              " questions are graded under both conditions; need at least 2");

    ComparisonReport result;
    result.a_label = a_label;
    result.b_label = b_label;
    result.a_graded = a.size();
    result.b_graded = b.size();

    result.agreement = stats::agreement(outcomes);
    if (result.agreement.a_only + result.agreement.b_only > 0) {
        result.mcnemar = stats::mcnemar(result.agreement);
        result.mcnemar_defined = true;
    }

    result.overall.category = "overall";
    result.overall.n = outcomes.size();
    for (const auto& outcome : outcomes) {
        result.overall.a_correct += outcome.a_correct ? 1 : 0;
        result.overall.b_correct += outcome.b_correct ? 1 : 0;
    }
    result.overall.bootstrap = stats::bootstrap_paired(outcomes, resamples, seed);
    result.overall.bootstrapped = true;

    const auto per_category = stats::per_category_bootstrap(outcomes, resamples, seed);
    result.skipped_categories = per_category.skipped;

    std::map<std::string, CategoryRow> rows;
    for (const auto& outcome : outcomes) {
        auto& row = rows[outcome.category];
        row.category = outcome.category;
        row.n += 1;
        row.a_correct += outcome.a_correct ? 1 : 0;
        row.b_correct += outcome.b_correct ? 1 : 0;
    }
    std::set<std::string> labels;
    for (const auto& [label, row] : rows) labels.insert(label);
    for (const auto& label : ordered_labels(labels)) {
        auto row = rows.at(label);
        const auto found = per_category.results.find(label);
        if (found != per_category.results.end()) {
            row.bootstrap = found->second;
            row.bootstrapped = true;
        }
        result.categories.push_back(std::move(row));
    }
    return result;
}

std::string render_markdown(const ComparisonReport& report) {
    std::ostringstream out;
    out << "# Paired comparison: " << report.a_label << " vs " << report.b_label << "\n\n";
    out << report.overall.n << " questions graded under both conditions (" << report.a_label
        << ": " << report.a_graded << " graded, " << report.b_label << ": " << report.b_graded
        << " graded).\n\n";

    out << "| Category | n | " << report.a_label << " % | " << report.b_label
        << " % | Delta (pp) | 95% CI (pp) | p (one-sided) |\n";
    out << "| --- | ---: | ---: | ---: | ---: | :---: | ---: |\n";
    for (const auto& row : report.categories) append_row(out, row);
    append_row(out, report.overall);

    if (!report.skipped_categories.empty()) {
        out << "\nSkipped (fewer than 2 paired questions): ";
        for (std::size_t i = 0; i < report.skipped_categories.size(); ++i) {
            if (i) out << ", ";
            out << report.skipped_categories[i];
        }
        out << ".\n";
    }

    out << "\n## Agreement\n\n";
    out << "| | " << report.b_label << " correct | " << report.b_label << " wrong |\n";
    out << "| --- | ---: | ---: |\n";
    out << "| " << report.a_label << " correct | " << report.agreement.both_correct << " | "
        << report.agreement.a_only << " |\n";
    out << "| " << report.a_label << " wrong | " << report.agreement.b_only << " | "
        << report.agreement.both_wrong << " |\n\n";

    if (report.mcnemar_defined) {
        out << "McNemar chi-squared = " << fmt("%.2f", report.mcnemar.chi_squared)
            << ", p = " << fmt_p(report.mcnemar.p_value) << " (continuity-corrected).\n";
    } else {
        out << "McNemar: undefined (no discordant pairs).\n";
    }
    return out.str();
}

std::string render_json(const ComparisonReport& report) {
    ordered_json root;
    root["a_label"] = report.a_label;
    root["b_label"] = report.b_label;
    root["common"] = report.overall.n;
    root["a_graded"] = report.a_graded;
    root["b_graded"] = report.b_graded;
    root["overall"] = row_json(report.overall);
    root["categories"] = ordered_json::array();
    for (const auto& row : report.categories) root["categories"].push_back(row_json(row));
    root["skipped_categories"] = report.skipped_categories;
    root["agreement"] = {{"both_correct", report.agreement.both_correct},
                         {"a_only", report.agreement.a_only},
                         {"b_only", report.agreement.b_only},
                         {"both_wrong", report.agreement.both_wrong}};
    ordered_json mcnemar;
    mcnemar["defined"] = report.mcnemar_defined;
    if (report.mcnemar_defined) {
        mcnemar["chi_squared"] = report.mcnemar.chi_squared;
        mcnemar["p_value"] = report.mcnemar.p_value;
    }
    root["mcnemar"] = mcnemar;
    return root.dump(2) + "\n";
}

std::string render_accuracy_markdown(const harness::AccuracyTable& table,
                                     const std::string& label) {
    std::ostringstream out;
    out << "# Accuracy: " << label << "\n\n";
    out << "| Category | correct | n | % |\n";
    out << "| --- | ---: | ---: | ---: |\n";
    std::set<std::string> labels;
    for (const auto& [category, row] : table.per_category) labels.insert(category);
    for (const auto& category : ordered_labels(labels)) {
        const auto& row = table.per_category.at(category);
        out << "| " << category << " | " << row.correct << " | " << row.total << " | "
            << fmt1(row.percent()) << " |\n";
    }
    out << "| overall | " << table.overall.correct << " | " << table.overall.total << " | "
        << fmt1(table.overall.percent()) << " |\n";
    return out.str();
}

std::string render_accuracy_json(const harness::AccuracyTable& table, const std::string& label) {
    ordered_json root;
    root["label"] = label;
    root["categories"] = ordered_json::array();
    std::set<std::string> labels;
    for (const auto& [category, row] : table.per_category) labels.insert(category);
    for (const auto& category : ordered_labels(labels)) {
        const auto& row = table.per_category.at(category);
        root["categories"].push_back({{"category", category},
                                      {"correct", row.correct},
                                      {"n", row.total},
                                      {"percent", row.percent()}});
    }
    root["overall"] = {{"correct", table.overall.correct},
                       {"n", table.overall.total},
                       {"percent", table.overall.percent()}};
    return root.dump(2) + "\n";
}

} // namespace dualtrace::report
