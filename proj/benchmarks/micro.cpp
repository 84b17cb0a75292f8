#include "tsgrid/algebra.hpp"
#include "tsgrid/dht.hpp"
#include "tsgrid/expr.hpp"
#include "tsgrid/indicators.hpp"
#include "tsgrid/segments.hpp"
#include "tsgrid/sim.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <set>
#include <vector>

using namespace tsgrid;

namespace {

TimeSeries walk(int64_t n) { return sim::synthetic_walk(n, 42); }

void bm_mavg_incremental(benchmark::State& state) {
    TimeSeries s = walk(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(mavg(s, 100));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_mavg_incremental)->Arg(10000)->Arg(1000000);

void bm_window_direct(benchmark::State& state) {
    TimeSeries s = walk(state.range(0));
    const WindowFn& avg = window_fn("AVG");
    for (auto _ : state) benchmark::DoNotOptimize(window(s, 100, avg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_window_direct)->Arg(10000);

void bm_ema(benchmark::State& state) {
    TimeSeries s = walk(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(ema(s, 0.3, 26));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_ema)->Arg(100000);

void bm_macd(benchmark::State& state) {
    TimeSeries s = walk(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(macd(s));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_macd)->Arg(100000);

void bm_canonicalize(benchmark::State& state) {
    expr::ExprPtr t =
        expr::parse("SCALE(MAVG(MSUB(SCALE(MAVG(S,12),2),SCALE(MAVG(S,26),2)),9),5)");
    for (auto _ : state) benchmark::DoNotOptimize(expr::canonicalize(t));
}
BENCHMARK(bm_canonicalize);

void bm_hash_key(benchmark::State& state) {
    std::string key = "v1:MAVG(MSUB(MAVG(S,12),MAVG(S,26)),9)#4096";
    for (auto _ : state) benchmark::DoNotOptimize(dht::hash_key(key, 32));
}
BENCHMARK(bm_hash_key);

void bm_ring_route(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::set<dht::RingId> ids;
    while (ids.size() < static_cast<size_t>(state.range(0)))
        ids.insert(rng() % (uint64_t{1} << 32));
    dht::Ring ring(std::vector<dht::RingId>(ids.begin(), ids.end()), 32);
    dht::RingId from = ring.nodes()[0];
    uint64_t key = 0;
    for (auto _ : state) {
        key += 0x9e3779b97f4a7c15ull;
        benchmark::DoNotOptimize(ring.route(from, key % (uint64_t{1} << 32)));
    }
}
BENCHMARK(bm_ring_route)->Arg(128)->Arg(1024);

void bm_cut_segments(benchmark::State& state) {
    TimeSeries s = walk(state.range(0));
    SegmentSpec spec{1024, 128};
    for (auto _ : state) benchmark::DoNotOptimize(cut_segments("v1:S", s, spec));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_cut_segments)->Arg(1000000);

void bm_segment_mavg(benchmark::State& state) {
    TimeSeries s = walk(4096);
    SegmentSpec spec{1024, 128};
    Segment seg = cut_segments("v1:S", s, spec)[1];
    for (auto _ : state) benchmark::DoNotOptimize(mavg_on_segment(seg, 100, "v1:MAVG(S,100)"));
    state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(bm_segment_mavg);

void bm_assemble(benchmark::State& state) {
    TimeSeries s = walk(state.range(0));
    SegmentSpec spec{1024, 128};
    std::vector<Segment> segs = cut_segments("v1:S", s, spec);
    for (auto _ : state)
        benchmark::DoNotOptimize(assemble(segs, 0, state.range(0) - 1));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_assemble)->Arg(1000000);

void bm_distributed_query(benchmark::State& state) {
    sim::Config cfg;
    cfg.peers = state.range(0);
    cfg.spec = SegmentSpec{1024, 128};
    cfg.seed = 7;
    for (auto _ : state) {
        state.PauseTiming();
        sim::Sim net(cfg);
        net.generate_series("S", 100000, 7);
        state.ResumeTiming();
        benchmark::DoNotOptimize(net.query("MAVG(S,100)"));
    }
    state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(bm_distributed_query)->Arg(8)->Arg(128)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
