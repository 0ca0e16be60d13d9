#include <benchmark/benchmark.h>

#include <random>
#include <thread>

#include "blink/blink_tree.hpp"

using namespace blink;

namespace {

std::string bench_key(uint64_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "key-%012llu", static_cast<unsigned long long>(i));
    return buf;
}

std::unique_ptr<BlinkTree> prefilled(uint32_t page_bits, int n) {
    auto t = BlinkTree::create_in_memory(PageConfig{page_bits});
    for (int i = 0; i < n; ++i) t->put(bench_key(uint64_t(i)), Value(i));
    return t;
}

}  // namespace

static void BM_SequentialPut(benchmark::State& state) {
    auto tree = BlinkTree::create_in_memory(PageConfig{uint32_t(state.range(0))});
    uint64_t i = 0;
    for (auto _ : state) tree->put(bench_key(i++), Value(i));
    state.SetItemsProcessed(int64_t(i));
}
BENCHMARK(BM_SequentialPut)->Arg(9)->Arg(12)->Arg(16);

static void BM_RandomPut(benchmark::State& state) {
    auto tree = BlinkTree::create_in_memory(PageConfig{uint32_t(state.range(0))});
    std::mt19937_64 rng(7);
    uint64_t n = 0;
    for (auto _ : state) {
        tree->put(bench_key(rng() % 1000000), Value(n++));
    }
    state.SetItemsProcessed(int64_t(n));
}
BENCHMARK(BM_RandomPut)->Arg(9)->Arg(12);

static void BM_Get(benchmark::State& state) {
    static auto tree = prefilled(12, 100000);
    std::mt19937_64 rng(11);
    uint64_t n = 0;
    for (auto _ : state) {
        auto v = tree->get(bench_key(rng() % 100000));
        benchmark::DoNotOptimize(v);
        ++n;
    }
    state.SetItemsProcessed(int64_t(n));
}
BENCHMARK(BM_Get)->Threads(1)->Threads(4)->Threads(8);

static void BM_Scan100(benchmark::State& state) {
    auto tree = prefilled(12, 100000);
    std::mt19937_64 rng(13);
    for (auto _ : state) {
        uint64_t lo = rng() % 99000;
        size_t seen = 0;
        tree->scan(bench_key(lo), bench_key(lo + 100), false,
                   [&](std::string_view, Value) { return ++seen < 100; });
        benchmark::DoNotOptimize(seen);
    }
}
BENCHMARK(BM_Scan100);

static void BM_MixedWorkload(benchmark::State& state) {
    static auto tree = prefilled(12, 100000);
    std::mt19937_64 rng(uint64_t(state.thread_index()) + 1);
    for (auto _ : state) {
        uint64_t k = rng() % 100000;
        switch (rng() % 4) {
            case 0: tree->put(bench_key(k), rng()); break;
            case 1: tree->remove(bench_key(k)); break;
            default: benchmark::DoNotOptimize(tree->get(bench_key(k)));
        }
    }
}
BENCHMARK(BM_MixedWorkload)->Threads(1)->Threads(4)->Threads(8);

BENCHMARK_MAIN();
