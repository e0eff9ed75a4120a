// Paired-condition statistics: agreement tables, McNemar's test with
// continuity correction, and seeded paired bootstrap for accuracy deltas.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dualtrace::stats {

/// One benchmark question graded under both conditions. `category` carries
/// the question type for per-category breakdowns; it may be empty.
struct PairedOutcome {
    std::string question_id;
    bool a_correct = false;
    bool b_correct = false;
    std::string category;
};

struct AgreementTable {
    std::size_t both_correct = 0;
    std::size_t a_only = 0;
    std::size_t b_only = 0;
    std::size_t both_wrong = 0;

    std::size_t n() const { return both_correct + a_only + b_only + both_wrong; }
};

/// Tabulates paired outcomes. Throws StatsError on duplicate question ids.
AgreementTable agreement(const std::vector<PairedOutcome>& outcomes);

struct McNemarResult {
    double chi_squared = 0.0;
    double p_value = 1.0;
};

/// McNemar's test with continuity correction over the discordant cells:
/// chi^2 = (max(|b-c|-1, 0))^2 / (b+c). Throws StatsError when there are no
/// discordant pairs (the statistic is undefined).
McNemarResult mcnemar(const AgreementTable& table);

struct BootstrapResult {
    double point_delta_pp = 0.0; // A minus B accuracy, percentage points
    double ci_low_pp = 0.0;
    double ci_high_pp = 0.0;
    double p_one_sided = 1.0; // fraction of resamples with delta <= 0
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
};

/// Percentile bootstrap over question resampling with replacement. The RNG
/// is std::mt19937_64 seeded with `seed`; each resample draws n indices via
/// gen() % n and accumulates per-question A-minus-B differences in integer
/// arithmetic. CI bounds are the 2.5th/97.5th percentiles of the sorted
/// resample deltas using linear interpolation at rank q*(B-1). Requires
/// n >= 2 (StatsError otherwise); identical inputs and seed reproduce
/// results bit-for-bit.
BootstrapResult bootstrap_paired(const std::vector<PairedOutcome>& outcomes,
                                 std::size_t resamples = 10000, std::uint64_t seed = 42);

struct CategoryBootstrap {
    std::map<std::string, BootstrapResult> results;
    std::vector<std::string> skipped; // categories with fewer than 2 outcomes
};

/// Runs the bootstrap per category label. Substreams are decorrelated by
/// seeding category i (in lexicographic label order) with seed + i, so a
/// category's result is invariant to what other categories contain.
CategoryBootstrap per_category_bootstrap(const std::vector<PairedOutcome>& outcomes,
                                         std::size_t resamples = 10000, std::uint64_t seed = 42);

} // namespace dualtrace::stats
