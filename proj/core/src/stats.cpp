#include "dualtrace/stats.hpp"

#include "dualtrace/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace dualtrace::stats {

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

BootstrapResult bootstrap_diffs(const std::vector<int>& diffs, std::size_t resamples,
                                std::uint64_t seed) {
    const std::size_t n = diffs.size();
    if (n < 2) throw StatsError("bootstrap requires at least 2 paired outcomes");
    if (resamples == 0) throw StatsError("bootstrap requires at least 1 resample");

    std::mt19937_64 gen(seed);
    std::vector<double> deltas;
    deltas.reserve(resamples);
    std::size_t nonpositive = 0;
    for (std::size_t b = 0; b < resamples; ++b) {
        long long sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += diffs[gen() % n];
        }
        if (sum <= 0) ++nonpositive;
        deltas.push_back(100.0 * static_cast<double>(sum) / static_cast<double>(n));
    }
    std::sort(deltas.begin(), deltas.end());

    long long total = 0;
    for (int d : diffs) total += d;

    BootstrapResult result;
    result.point_delta_pp = 100.0 * static_cast<double>(total) / static_cast<double>(n);
    result.ci_low_pp = percentile(deltas, 0.025);
    result.ci_high_pp = percentile(deltas, 0.975);
    result.p_one_sided = static_cast<double>(nonpositive) / static_cast<double>(resamples);
    result.resamples = resamples;
    result.seed = seed;
    return result;
}

std::vector<int> to_diffs(const std::vector<PairedOutcome>& outcomes) {
    std::vector<int> diffs;
    diffs.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        diffs.push_back(static_cast<int>(o.a_correct) - static_cast<int>(o.b_correct));
    }
    return diffs;
}

} // namespace

AgreementTable agreement(const std::vector<PairedOutcome>& outcomes) {
    std::set<std::string> seen;
    AgreementTable table;
    for (const auto& o : outcomes) {
        if (!seen.insert(o.question_id).second) {
            throw StatsError("duplicate question id '" + o.question_id + "' in paired outcomes");
        }
        if (o.a_correct && o.b_correct) ++table.both_correct;
        else if (o.a_correct) ++table.a_only;
        else if (o.b_correct) ++table.b_only;
        else ++table.both_wrong;
    }
    return table;
}

McNemarResult mcnemar(const AgreementTable& table) {
    const double b = static_cast<double>(table.a_only);
    const double c = static_cast<double>(table.b_only);
    if (table.a_only + table.b_only == 0) {
        throw StatsError("no discordant pairs: McNemar statistic undefined");
    }
    const double adj = std::max(std::abs(b - c) - 1.0, 0.0);
    McNemarResult result;
    result.chi_squared = adj * adj / (b + c);
    // Survival function of chi^2 with 1 df.
    result.p_value = std::erfc(std::sqrt(result.chi_squared / 2.0));
    return result;
}

BootstrapResult bootstrap_paired(const std::vector<PairedOutcome>& outcomes,
                                 std::size_t resamples, std::uint64_t seed) {
    return bootstrap_diffs(to_diffs(outcomes), resamples, seed);
}

CategoryBootstrap per_category_bootstrap(const std::vector<PairedOutcome>& outcomes,
                                         std::size_t resamples, std::uint64_t seed) {
    std::map<std::string, std::vector<int>> groups; // ordered: lexicographic labels
    for (const auto& o : outcomes) {
        groups[o.category].push_back(static_cast<int>(o.a_correct) -
                                     static_cast<int>(o.b_correct));
    }

    CategoryBootstrap out;
    std::uint64_t index = 0;
    for (const auto& [label, diffs] : groups) {
        const std::uint64_t substream = seed + index++;
        if (diffs.size() < 2) {
            out.skipped.push_back(label);
            continue;
        }
        out.results.emplace(label, bootstrap_diffs(diffs, resamples, substream));
    }
    return out;
}

} // namespace dualtrace::stats
