#include <benchmark/benchmark.h>

#include <dualtrace/trace.hpp>

#include <string>
#include <vector>

#include "helpers.hpp"

namespace {

using namespace dualtrace;

std::vector<MemoryEntry> sample_entries(std::size_t count) {
    testutil::EntryGenerator generator(7);
    std::vector<MemoryEntry> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) entries.push_back(generator.next());
    return entries;
}

void BM_serialize_entry(benchmark::State& state) {
    const auto entries = sample_entries(256);
    std::size_t index = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(serialize_entry(entries[index]));
        index = (index + 1) % entries.size();
    }
}
BENCHMARK(BM_serialize_entry);

void BM_parse_entry(benchmark::State& state) {
    const auto entries = sample_entries(256);
    std::vector<std::string> texts;
    texts.reserve(entries.size());
    for (const auto& entry : entries) texts.push_back(serialize_entry(entry));
    std::size_t index = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_entry(texts[index]));
        index = (index + 1) % texts.size();
    }
}
BENCHMARK(BM_parse_entry);

void BM_round_trip(benchmark::State& state) {
    const auto entries = sample_entries(64);
    std::size_t index = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_entry(serialize_entry(entries[index])));
        index = (index + 1) % entries.size();
    }
}
BENCHMARK(BM_round_trip);

} // namespace

BENCHMARK_MAIN();
