#include <benchmark/benchmark.h>

#include <dualtrace/provider.hpp>
#include <dualtrace/retrieve.hpp>
#include <dualtrace/store.hpp>

#include <filesystem>
#include <string>

#include "helpers.hpp"

namespace {

using namespace dualtrace;
namespace fs = std::filesystem;

// 200 pairs with distinct anchors and varied component text; built once.
store::MemoryStore& populated_store() {
    static store::MemoryStore instance = [] {
        const auto dir = fs::temp_directory_path() / "dualtrace_bench_store";
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto store = store::MemoryStore::open(dir);
        const char* themes[] = {"kayak", "harbor", "ledger", "garage", "notebook",
                                "signal", "orange", "window", "ticket", "panel"};
        for (int i = 0; i < 200; ++i) {
            const std::string slug =
                std::string(themes[i % 10]) + "_topic_" + std::to_string(i);
            auto fact = testutil::make_fact(slug);
            fact.components = {std::string(themes[i % 10]) + " detail number " +
                                   std::to_string(i),
                               "logged on the " + std::string(themes[(i + 3) % 10]),
                               "cost came to " + std::to_string(40 + i) + " dollars"};
            auto scene = testutil::make_scene(slug);
            store.insert_pair(fact, scene, "s" + std::to_string(i));
        }
        return store;
    }();
    return instance;
}

void BM_store_search(benchmark::State& state) {
    const auto& store = populated_store();
    for (auto _ : state)
        benchmark::DoNotOptimize(store.search("kayak harbor ticket dollars", 10));
}
BENCHMARK(BM_store_search);

void BM_store_get_by_anchor(benchmark::State& state) {
    const auto& store = populated_store();
    for (auto _ : state)
        benchmark::DoNotOptimize(store.get_by_anchor(Anchor("kayak_topic_100")));
}
BENCHMARK(BM_store_get_by_anchor);

void BM_retrieve_answer(benchmark::State& state) {
    const auto& store = populated_store();
    provider::MockProvider backend(provider::MockProvider::Mode::Recall);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            retrieve::answer_question("what did the kayak cost in dollars?", store, backend));
}
BENCHMARK(BM_retrieve_answer);

void BM_store_open(benchmark::State& state) {
    populated_store(); // ensure the on-disk image exists
    const auto dir = fs::temp_directory_path() / "dualtrace_bench_store";
    for (auto _ : state) benchmark::DoNotOptimize(store::MemoryStore::open(dir));
}
BENCHMARK(BM_store_open);

} // namespace
