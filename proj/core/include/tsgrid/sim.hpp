#pragma once

#include "tsgrid/dht.hpp"
#include "tsgrid/expr.hpp"
#include "tsgrid/segments.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace tsgrid::sim {

using dht::Locator;
using dht::RingId;

/// Virtual-time cost of simulated work; latencies are deterministic
/// functions of message sizes and computation volume.
struct CostModel {
    int64_t per_message_ns = 1'000'000;
    int64_t per_byte_ns = 8;
    int64_t per_item_ns = 15;

    friend bool operator==(const CostModel&, const CostModel&) = default;
};

/// Cumulative counters for one simulation; all monotone while it runs.
struct Metrics {
    int64_t routing_hops = 0;
    int64_t messages = 0;
    int64_t bytes_sent = 0;
    int64_t cache_hits = 0;
    int64_t cache_misses = 0;
    int64_t segments_computed = 0;
    int64_t segments_fetched = 0;
    int64_t fallback_evals = 0;
    int64_t wall_time_ns = 0;

    friend Metrics operator-(const Metrics& a, const Metrics& b) {
        return {a.routing_hops - b.routing_hops,
                a.messages - b.messages,
                a.bytes_sent - b.bytes_sent,
                a.cache_hits - b.cache_hits,
                a.cache_misses - b.cache_misses,
                a.segments_computed - b.segments_computed,
                a.segments_fetched - b.segments_fetched,
                a.fallback_evals - b.fallback_evals,
                a.wall_time_ns - b.wall_time_ns};
    }
};

enum class MsgKind : uint8_t {
    lookup,
    lookup_resp,
    put,
    get,
    get_resp,
    remove,
    ack,
    seg_fetch,
    seg_data
};
const char* msg_kind_name(MsgKind k);

struct Config {
    int peers = 8;
    int ring_bits = 32;
    SegmentSpec spec{};
    int64_t cache_capacity = 8192;
    uint64_t seed = 1;
    CostModel cost{};
    std::string trace_path; // optional trace file; the digest is always kept
};

/// FIFO cache of segments keyed by (series key, segment index). Inserting a
/// present entry changes nothing (pure FIFO, no touch-refresh).
class PeerCache {
public:
    explicit PeerCache(int64_t capacity) : capacity_(capacity) {}

    const Segment* find(const std::string& key, uint64_t index) const;
    std::vector<Segment> insert(Segment seg);

    /// Cached segment indices of one key, ascending.
    std::vector<uint64_t> indices_of(const std::string& key) const;
    /// All cached (key, index) pairs, ascending.
    std::vector<std::pair<std::string, uint64_t>> entries() const;
    size_t size() const { return store_.size(); }

private:
    int64_t capacity_;
    std::deque<std::pair<std::string, uint64_t>> fifo_;
    std::map<std::pair<std::string, uint64_t>, Segment> store_;
};

/// Builds the deterministic random-walk series used by workload scripts and
/// benchmarks: level starts at 100 and drifts by U(-1, 1) per step, with the
/// requested fractions of "!" and "?" values mixed in.
TimeSeries synthetic_walk(int64_t n, uint64_t seed, double empty_frac = 0.0,
                          double unknown_frac = 0.0, Timestamp start = {},
                          Granularity g = Granularity::day);

/// Deterministic discrete-event simulation of a peer network executing
/// time-series queries against the segment cache + locator index. One
/// instance is one network; queries run to quiescence before returning.
class Sim {
public:
    explicit Sim(const Config& cfg);

    const Config& config() const { return cfg_; }
    const std::vector<RingId>& peers() const { return peers_; }
    const dht::LocatorIndex& index() const { return index_; }
    const Metrics& metrics() const { return metrics_; }

    /// Cuts the series into segments, places each at the ring owner of
    /// hash(key # index), caches and publishes it there.
    void load_series(const std::string& name, const TimeSeries& s);

    /// Synthesizes and loads a random-walk series (used by workload scripts
    /// and benchmarks; fractions of "!" and "?" values are configurable).
    void generate_series(const std::string& name, int64_t n, uint64_t seed,
                         double empty_frac = 0.0, double unknown_frac = 0.0,
                         Timestamp start = {}, Granularity g = Granularity::day);

    /// Plans, executes and assembles one query; the result covers [from, to]
    /// (defaults: the full base range). Equals centralized evaluation.
    TimeSeries query(const std::string& expr_text,
                     std::optional<Timestamp> from = std::nullopt,
                     std::optional<Timestamp> to = std::nullopt);

    /// Verifies the locator/cache bijection; failure text in `why`.
    bool coherent(std::string* why = nullptr) const;

    /// Hex digest over all trace lines so far (non-destructive).
    std::string trace_digest() const;

    /// Config echo + counters + trace digest, one "key: value" per line.
    std::string metrics_document() const;

    /// Executes `load`, `gen`, `query`, `stats` lines; writes command output
    /// (query summaries, stats documents) to `out`.
    void run_script(std::istream& in, std::ostream& out);

    /// Total cached segments across peers (introspection for tests).
    size_t total_cached_segments() const;

private:
    struct Task {
        enum class Kind : uint8_t { cache_hit, fetch_base, compute } kind;
        RingId peer = 0;
    };

    struct Plan {
        std::string key;
        expr::ExprPtr tree;
        std::map<uint64_t, Task> tasks;
        std::vector<std::shared_ptr<const Plan>> children; // per series arg
    };
    using PlanPtr = std::shared_ptr<const Plan>;

    struct PeerState {
        PeerCache cache;
        // published locator runs per key: [first, last] segment ranges
        std::map<std::string, std::vector<std::pair<uint64_t, uint64_t>>> published;
        // in-flight computations, with the callbacks awaiting each
        std::map<std::pair<std::string, uint64_t>,
                 std::vector<std::function<void(const Segment&)>>>
            pending;
    };

    struct Event {
        int64_t time = 0;
        uint64_t seq = 0;
        uint64_t msg_id = 0;
        RingId src = 0, dst = 0;
        MsgKind kind = MsgKind::ack;
        std::string info;
        size_t size = 0;
        std::function<void()> fn;
    };
    struct EventLater {
        bool operator()(const Event& a, const Event& b) const {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    // --- scheduling ---------------------------------------------------
    void net_send(RingId src, RingId dst, MsgKind kind, std::string info, size_t size,
                  int64_t extra_delay, std::function<void()> fn);
    void local_after(RingId peer, int64_t delay, std::function<void()> fn);
    void drain();

    // --- index operations (state at issue, messages for cost) ----------
    std::vector<Locator> dht_get(RingId from, const std::string& key);
    void dht_put(RingId from, const std::string& key, const Locator& loc);
    void dht_remove(RingId from, const std::string& key, const Locator& loc);

    // --- cache + publication -------------------------------------------
    void cache_insert(RingId peer, Segment seg);
    void sync_publication(RingId peer, const std::string& key);
    Locator run_locator(RingId peer, const std::string& key, uint64_t first,
                        uint64_t last) const;

    // --- planning and execution ----------------------------------------
    PlanPtr make_plan(RingId at, const expr::ExprPtr& tree,
                      const std::vector<uint64_t>& segs);
    void obtain(RingId who, const PlanPtr& plan, uint64_t seg,
                std::function<void(const Segment&)> cb, int attempt = 0);
    void fetch_from(RingId who, RingId holder, const PlanPtr& plan, uint64_t seg,
                    std::function<void(const Segment&)> cb, int attempt);
    void start_compute(RingId executor, const PlanPtr& plan, uint64_t seg,
                       std::function<void(const Segment&)> done);
    void handle_miss(RingId at, const PlanPtr& plan, uint64_t seg,
                     std::function<void(const Segment&)> cb, int attempt);
    bool locator_covers(const std::string& key, const Locator& loc, uint64_t seg) const;
    Segment compute_from_children(const expr::ExprPtr& tree, const std::string& out_key,
                                  const std::vector<Segment>& children) const;
    TimeSeries fallback_query(RingId coordinator, const expr::ExprPtr& tree,
                              int64_t p0, int64_t p1, const Calendar& grid);
    TimeSeries fetch_base_range(RingId at, const std::string& key, const Calendar& grid,
                                int64_t first_pos, int64_t last_pos);

    // --- shared helpers --------------------------------------------------
    const Calendar& grid_of(const std::string& key) const;
    void note_grid(const std::string& key, const Calendar& grid);
    RingId placement_owner(const std::string& key, uint64_t seg) const;
    static size_t plan_wire_size(const Plan& plan);

    Config cfg_;
    dht::Ring ring_;
    std::vector<RingId> peers_;
    dht::LocatorIndex index_;
    std::map<RingId, PeerState> state_;
    std::map<std::string, Calendar> loaded_;  // base key -> full grid
    std::map<std::string, Calendar> grids_;   // any key -> grid (length 0)

    std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
    bool draining_ = false;
    int64_t now_ = 0;
    uint64_t seq_ = 0;
    uint64_t next_msg_id_ = 1;
    uint64_t query_counter_ = 0;

    Metrics metrics_;
    struct TraceDigest;
    std::shared_ptr<TraceDigest> trace_;
};

} // namespace tsgrid::sim
