#include "tsgrid/sim.hpp"

#include "tsgrid/expr.hpp"
#include "tsgrid/io.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"

using namespace tsgrid;
using namespace tsgrid::testing;
using tsgrid::sim::Sim;

namespace {

sim::Config small_config(int peers, int64_t core, int64_t halo,
                         int64_t capacity = 1 << 20) {
    sim::Config cfg;
    cfg.peers = peers;
    cfg.ring_bits = 16;
    cfg.spec = SegmentSpec{core, halo};
    cfg.cache_capacity = capacity;
    cfg.seed = 5;
    return cfg;
}

Segment stub_segment(const char* key, uint64_t index) {
    Segment s;
    s.name = key;
    s.index = index;
    s.spec = SegmentSpec{4, 0};
    s.calendar = daily(4);
    s.values.assign(4, Value::unknown());
    return s;
}

} // namespace

TEST_CASE("peer cache evicts strictly first-in-first-out") {
    sim::PeerCache cache(2);
    CHECK(cache.insert(stub_segment("A", 0)).empty());
    CHECK(cache.insert(stub_segment("B", 0)).empty());
    CHECK(cache.size() == 2);

    auto evicted = cache.insert(stub_segment("C", 0));
    REQUIRE(evicted.size() == 1);
    CHECK(evicted[0].name == "A");
    CHECK(cache.find("A", 0) == nullptr);
    CHECK(cache.find("B", 0) != nullptr);

    // re-inserting B does not refresh its queue position...
    CHECK(cache.insert(stub_segment("B", 0)).empty());
    // ...so the next insert still evicts B, not C
    auto evicted2 = cache.insert(stub_segment("D", 0));
    REQUIRE(evicted2.size() == 1);
    CHECK(evicted2[0].name == "B");
    CHECK(cache.find("C", 0) != nullptr);

    SUBCASE("indices_of lists one key ascending") {
        sim::PeerCache wide(8);
        wide.insert(stub_segment("K", 3));
        wide.insert(stub_segment("K", 1));
        wide.insert(stub_segment("L", 9));
        wide.insert(stub_segment("K", 2));
        CHECK(wide.indices_of("K") == std::vector<uint64_t>{1, 2, 3});
        CHECK(wide.indices_of("L") == std::vector<uint64_t>{9});
        CHECK(wide.indices_of("M").empty());
    }
    SUBCASE("zero capacity never stores") {
        sim::PeerCache off(0);
        CHECK(off.insert(stub_segment("A", 0)).empty());
        CHECK(off.size() == 0);
        CHECK(off.find("A", 0) == nullptr);
    }
}

TEST_CASE("distributed queries equal centralized evaluation") {
    std::mt19937_64 rng(17);
    TimeSeries a = random_series(rng, 100, 0.05, 0.05);
    TimeSeries b = random_series(rng, 100, 0.05, 0.05);
    expr::Store store{{"A", a}, {"B", b}};

    for (int peers : {1, 2, 8}) {
        CAPTURE(peers);
        Sim sim(small_config(peers, 32, 8));
        sim.load_series("A", a);
        sim.load_series("B", b);
        for (const char* q :
             {"A", "MAVG(A,5)", "SCALE(MAVG(A,5),2)", "MSUB(MAVG(A,3),MAVG(A,7))",
              "EMA(A,0.5,4)", "SEL(A,>100)", "JOIN(A,B,SUM)", "MACD(A,3,5,2)"}) {
            CAPTURE(q);
            TimeSeries got = sim.query(q);
            TimeSeries want = expr::evaluate(expr::parse(q), store);
            CHECK(got.calendar() == want.calendar());
            CHECK(series_approx(got, want, 1e-9));
        }
        std::string why;
        CHECK_MESSAGE(sim.coherent(&why), why);
    }
}

TEST_CASE("interval queries clip exactly, crossing segment boundaries") {
    std::mt19937_64 rng(23);
    TimeSeries a = random_series(rng, 100, 0.05, 0.05);
    expr::Store store{{"A", a}};
    Sim sim(small_config(4, 32, 8));
    sim.load_series("A", a);

    TimeSeries want_full = expr::evaluate(expr::parse("MAVG(A,7)"), store);
    struct Range {
        int64_t from, to;
    };
    for (Range r : {Range{40, 80}, Range{31, 33}, Range{0, 0}, Range{99, 99}, Range{0, 99}}) {
        CAPTURE(r.from);
        CAPTURE(r.to);
        Timestamp t0 = a.calendar().grid_time(r.from);
        Timestamp t1 = a.calendar().grid_time(r.to);
        TimeSeries got = sim.query("MAVG(A,7)", t0, t1);
        TimeSeries want = want_full.slice(t0, t1);
        CHECK(got.calendar() == want.calendar());
        CHECK(series_approx(got, want, 1e-9));
    }

    CHECK_THROWS_AS(
        sim.query("A", a.calendar().grid_time(5), a.calendar().grid_time(2)), Error);
}

TEST_CASE("warm runs recompute nothing and reuse published sub-series") {
    std::mt19937_64 rng(31);
    TimeSeries a = random_series(rng, 200, 0.05, 0.05);
    Sim sim(small_config(4, 16, 8));
    sim.load_series("A", a);
    const int64_t segs = 13; // ceil(200 / 16)

    sim::Metrics before = sim.metrics();
    sim.query("MACD(A,3,5,2)");
    sim::Metrics cold = sim.metrics() - before;
    // four derived series (two averages, their difference, the signal line),
    // each segment computed exactly once
    CHECK(cold.segments_computed == 4 * segs);
    CHECK(cold.cache_misses == 4 * segs);

    sim::Metrics mid = sim.metrics();
    sim.query("MACD(A,3,5,2)");
    sim::Metrics warm = sim.metrics() - mid;
    CHECK(warm.segments_computed == 0);
    CHECK(warm.cache_misses == 0);
    CHECK(warm.cache_hits >= segs);
    CHECK(warm.bytes_sent < cold.bytes_sent);

    // the fast leg was published under its own name during the cold run
    sim::Metrics mid2 = sim.metrics();
    TimeSeries leg = sim.query("MAVG(A,3)");
    sim::Metrics reuse = sim.metrics() - mid2;
    CHECK(reuse.segments_computed == 0);
    CHECK(reuse.cache_hits >= segs);
    expr::Store store{{"A", a}};
    CHECK(series_approx(leg, expr::evaluate(expr::parse("MAVG(A,3)"), store), 1e-9));

    std::string why;
    CHECK_MESSAGE(sim.coherent(&why), why);
}

TEST_CASE("eviction churn keeps caches and locators in lockstep") {
    std::mt19937_64 rng(41);
    TimeSeries a = random_series(rng, 200, 0.05, 0.05);

    SUBCASE("a query can outrun its own evictions") {
        // one peer, room for 20 of the eventual 26 segments: computing the 13
        // derived segments in order evicts the 6 oldest base segments, all of
        // which have already been consumed by the time they go
        Sim sim(small_config(1, 16, 8, 20));
        sim.load_series("A", a);
        CHECK(sim.total_cached_segments() == 13);

        expr::Store store{{"A", a}};
        TimeSeries got = sim.query("MAVG(A,2)");
        CHECK(series_approx(got, expr::evaluate(expr::parse("MAVG(A,2)"), store), 1e-9));
        CHECK(sim.total_cached_segments() == 20);
        std::string why;
        REQUIRE_MESSAGE(sim.coherent(&why), why);

        // the derived series survived intact, so a repeat is served whole
        sim::Metrics before = sim.metrics();
        sim.query("MAVG(A,2)");
        CHECK((sim.metrics() - before).segments_computed == 0);

        // a fresh derivation needs the evicted base segments and fails loudly
        try {
            sim.query("MAVG(A,3)");
            FAIL("expected GapError");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::gap_error);
        }
        REQUIRE_MESSAGE(sim.coherent(&why), why);
    }
    SUBCASE("failed queries leave a coherent system behind") {
        Sim sim(small_config(4, 16, 8, 6)); // 24 slots across peers, 26 needed
        sim.load_series("A", a);
        int gaps = 0;
        for (int w = 2; w <= 9; ++w) {
            try {
                sim.query("MAVG(A," + std::to_string(w) + ")");
            } catch (const Error& e) {
                CHECK(e.code() == Errc::gap_error); // base segment churned out
                ++gaps;
            }
            std::string why;
            REQUIRE_MESSAGE(sim.coherent(&why), why);
        }
        CHECK(gaps >= 1);
        CHECK(sim.index().all_entries().size() <= sim.total_cached_segments());
    }
}

TEST_CASE("zero cache capacity disables caching and locators") {
    std::mt19937_64 rng(43);
    TimeSeries a = random_series(rng, 64, 0, 0);
    Sim sim(small_config(2, 16, 4, 0));
    sim.load_series("A", a);
    CHECK(sim.total_cached_segments() == 0);
    CHECK(sim.index().all_entries().empty());
    try {
        sim.query("A");
        FAIL("expected GapError");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::gap_error);
    }
    std::string why;
    CHECK_MESSAGE(sim.coherent(&why), why);
}

TEST_CASE("a single peer answers everything without network messages") {
    std::mt19937_64 rng(47);
    TimeSeries a = random_series(rng, 150, 0.05, 0.05);
    Sim sim(small_config(1, 32, 8));
    sim.load_series("A", a);
    sim.query("MACD(A,3,5,2)");
    sim.query("MAVG(A,5)");
    CHECK(sim.metrics().messages == 0);
    CHECK(sim.metrics().bytes_sent == 0);
    CHECK(sim.metrics().routing_hops == 0);
    CHECK(sim.metrics().segments_computed > 0);
    // the trace saw nothing: digest of zero bytes
    CHECK(sim.trace_digest() ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("reach beyond the halo falls back to central evaluation") {
    std::mt19937_64 rng(53);
    TimeSeries a = random_series(rng, 100, 0.05, 0.05);
    expr::Store store{{"A", a}};
    Sim sim(small_config(4, 32, 4));
    sim.load_series("A", a);

    for (const char* q : {"MAVG(A,6)", "MAVG(MAVG(A,4),3)", "MOM(A,5)"}) {
        CAPTURE(q);
        sim::Metrics before = sim.metrics();
        TimeSeries got = sim.query(q);
        sim::Metrics delta = sim.metrics() - before;
        CHECK(delta.fallback_evals == 1);
        CHECK(delta.segments_computed == 0); // nothing distributed, nothing cached
        CHECK(series_approx(got, expr::evaluate(expr::parse(q), store), 1e-9));
    }

    // clipping against the widened fetch window stays exact mid-series
    Timestamp t0 = a.calendar().grid_time(40);
    Timestamp t1 = a.calendar().grid_time(80);
    TimeSeries part = sim.query("MAVG(A,6)", t0, t1);
    TimeSeries want = expr::evaluate(expr::parse("MAVG(A,6)"), store).slice(t0, t1);
    CHECK(series_approx(part, want, 1e-9));

    // w=5 reaches exactly the halo and stays distributed
    sim::Metrics before = sim.metrics();
    sim.query("MAVG(A,5)");
    CHECK((sim.metrics() - before).fallback_evals == 0);

    std::string why;
    CHECK_MESSAGE(sim.coherent(&why), why);
}

TEST_CASE("loading rejects duplicates, bad names and mixed calendars") {
    std::mt19937_64 rng(59);
    TimeSeries a = random_series(rng, 50, 0, 0);
    Sim sim(small_config(2, 16, 4));
    sim.load_series("A", a);

    try {
        sim.load_series("A", a);
        FAIL("expected DuplicateSeries");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::duplicate_series);
    }
    CHECK_THROWS_AS(sim.load_series("MAVG(X,2)", a), Error);
    CHECK_THROWS_AS(sim.load_series("9", a), Error);

    // same length, different granularity: join is refused
    TimeSeries hourly(Calendar(a.calendar().start(), Granularity::hour, a.length()),
                      std::vector<Value>(a.values().begin(), a.values().end()));
    sim.load_series("H", hourly);
    try {
        sim.query("JOIN(A,H,SUM)");
        FAIL("expected CalendarMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::calendar_mismatch);
    }

    try {
        sim.query("MAVG(X,2)");
        FAIL("expected UnknownSeries");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::unknown_series);
    }
}

TEST_CASE("simulations with one seed replay byte-identically") {
    auto run = [](uint64_t seed) {
        sim::Config cfg = small_config(8, 32, 8);
        cfg.seed = seed;
        Sim sim(cfg);
        sim.generate_series("S", 2000, 7, 0.05, 0.05);
        sim.query("MAVG(S,9)");
        sim.query("MACD(S,3,5,2)");
        sim.query("MAVG(S,9)");
        return sim.metrics_document();
    };
    std::string first = run(5);
    std::string second = run(5);
    CHECK(first == second);
    CHECK(first.find("trace_digest: ") != std::string::npos);
    CHECK(run(6) != first); // different ring placement changes the traffic
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(Sim(small_config(0, 16, 4)), Error);
    CHECK_THROWS_AS(Sim(small_config(4, 0, 4)), Error);
    CHECK_THROWS_AS(Sim(small_config(4, 16, -1)), Error);
    CHECK_THROWS_AS(Sim(small_config(4, 16, 4, -1)), Error);
    {
        sim::Config cfg = small_config(4, 16, 4);
        cfg.ring_bits = 0;
        CHECK_THROWS_AS((Sim(cfg)), Error);
    }
    {
        sim::Config cfg = small_config(5, 16, 4);
        cfg.ring_bits = 2; // only 4 ring positions
        CHECK_THROWS_AS((Sim(cfg)), Error);
    }
}

TEST_CASE("metrics document lists config and counters") {
    Sim sim(small_config(3, 16, 4));
    std::string doc = sim.metrics_document();
    for (const char* key :
         {"peers: 3", "ring_bits: 16", "core_len: 16", "halo: 4", "cache_capacity: ",
          "seed: 5", "cost_per_message_ns: ", "routing_hops: 0", "messages: 0",
          "bytes_sent: 0", "cache_hits: 0", "cache_misses: 0", "segments_computed: 0",
          "segments_fetched: 0", "fallback_evals: 0", "wall_time_ns: 0", "trace_digest: "}) {
        CAPTURE(key);
        CHECK(doc.find(key) != std::string::npos);
    }
    size_t at = doc.find("trace_digest: ");
    std::string digest = doc.substr(at + 14);
    CHECK(digest.size() == 65); // 64 hex chars and the trailing newline
}

TEST_CASE("workload scripts run end to end") {
    Sim sim(small_config(4, 16, 8));
    std::istringstream script(R"__(# demo workload
gen S 100 --seed 3 --empty 0.05 --unknown 0.05 --start 2020-01-01
query "MAVG(S,4)"
query "MAVG(S,4)" --from 2020-01-10 --to 2020-01-20
stats
)__");
    std::ostringstream out;
    sim.run_script(script, out);
    std::string text = out.str();
    CHECK(text.find("generated S n=100") != std::string::npos);
    CHECK(text.find("result MAVG(S,4) n=100") != std::string::npos);
    CHECK(text.find("result MAVG(S,4) n=11") != std::string::npos);
    CHECK(text.find("peers: 4") != std::string::npos);
    CHECK(text.find("trace_digest: ") != std::string::npos);

    std::string why;
    CHECK_MESSAGE(sim.coherent(&why), why);

    SUBCASE("unknown commands and flags are rejected") {
        std::istringstream bad("frobnicate X\n");
        std::ostringstream sink;
        Sim fresh(small_config(2, 16, 4));
        CHECK_THROWS_AS(fresh.run_script(bad, sink), Error);

        std::istringstream badflag("gen S 10 --wat 3\n");
        CHECK_THROWS_AS(fresh.run_script(badflag, sink), Error);
    }
    SUBCASE("load reads series files and geometry flags must agree") {
        std::string path = "/tmp/tsgrid_sim_load.csv";
        {
            std::ofstream f(path, std::ios::trunc);
            f << "date,value\n";
            for (int i = 0; i < 40; ++i)
                f << format_timestamp(parse_timestamp("2021-01-01").plus(i, Granularity::day))
                  << "," << 100 + i << "\n";
        }
        Sim fresh(small_config(2, 16, 4));
        std::istringstream ok("load P " + path + " --core 16 --halo 4\nquery \"MAVG(P,3)\"\n");
        std::ostringstream sink;
        fresh.run_script(ok, sink);
        CHECK(sink.str().find("loaded P") != std::string::npos);
        CHECK(sink.str().find("result MAVG(P,3) n=40") != std::string::npos);

        std::istringstream clash("load Q " + path + " --core 32\n");
        CHECK_THROWS_AS(fresh.run_script(clash, sink), Error);
        std::remove(path.c_str());
    }
}
