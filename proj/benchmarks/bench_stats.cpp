#include <benchmark/benchmark.h>

#include <dualtrace/stats.hpp>

#include <string>
#include <vector>

namespace {

using namespace dualtrace;

std::vector<stats::PairedOutcome> paired_99() {
    std::vector<stats::PairedOutcome> outcomes;
    const char* categories[] = {"single_session", "multi_session", "knowledge_update",
                                "temporal", "abstention"};
    for (int i = 0; i < 99; ++i) {
        stats::PairedOutcome outcome;
        outcome.question_id = "q" + std::to_string(i);
        outcome.a_correct = i < 73;
        outcome.b_correct = i >= 22 && i < 75;
        outcome.category = categories[i % 5];
        outcomes.push_back(std::move(outcome));
    }
    return outcomes;
}

void BM_mcnemar(benchmark::State& state) {
    const stats::AgreementTable table{51, 22, 2, 24};
    for (auto _ : state) benchmark::DoNotOptimize(stats::mcnemar(table));
}
BENCHMARK(BM_mcnemar);

void BM_agreement(benchmark::State& state) {
    const auto outcomes = paired_99();
    for (auto _ : state) benchmark::DoNotOptimize(stats::agreement(outcomes));
}
BENCHMARK(BM_agreement);

void BM_bootstrap_paired(benchmark::State& state) {
    const auto outcomes = paired_99();
    const auto resamples = static_cast<std::size_t>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(stats::bootstrap_paired(outcomes, resamples, 42));
}
BENCHMARK(BM_bootstrap_paired)->Arg(1000)->Arg(10000);

void BM_per_category_bootstrap(benchmark::State& state) {
    const auto outcomes = paired_99();
    for (auto _ : state)
        benchmark::DoNotOptimize(stats::per_category_bootstrap(outcomes, 10000, 42));
}
BENCHMARK(BM_per_category_bootstrap);

} // namespace
