#include "tsgrid/sim.hpp"

#include "tsgrid/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace tsgrid::sim {

namespace {

// Fixed header overhead assumed for every wire message.
constexpr size_t kMsgHeader = 16;
constexpr size_t kLocatorBytes = 24;

std::string seg_label(const std::string& key, uint64_t seg) {
    return key + "#" + std::to_string(seg);
}

} // namespace

const char* msg_kind_name(MsgKind k) {
    switch (k) {
    case MsgKind::lookup: return "LOOKUP";
    case MsgKind::lookup_resp: return "LOOKUP_RESP";
    case MsgKind::put: return "PUT";
    case MsgKind::get: return "GET";
    case MsgKind::get_resp: return "GET_RESP";
    case MsgKind::remove: return "REMOVE";
    case MsgKind::ack: return "ACK";
    case MsgKind::seg_fetch: return "SEG_FETCH";
    case MsgKind::seg_data: return "SEG_DATA";
    }
    return "?";
}

// --- PeerCache -----------------------------------------------------------

const Segment* PeerCache::find(const std::string& key, uint64_t index) const {
    auto it = store_.find({key, index});
    return it == store_.end() ? nullptr : &it->second;
}

std::vector<Segment> PeerCache::insert(Segment seg) {
    if (capacity_ == 0) return {};
    std::pair<std::string, uint64_t> id{seg.name, seg.index};
    if (store_.count(id)) return {}; // already cached; FIFO position unchanged
    std::vector<Segment> evicted;
    while (static_cast<int64_t>(store_.size()) >= capacity_) {
        auto victim = fifo_.front();
        fifo_.pop_front();
        auto it = store_.find(victim);
        evicted.push_back(std::move(it->second));
        store_.erase(it);
    }
    fifo_.push_back(id);
    store_.emplace(std::move(id), std::move(seg));
    return evicted;
}

std::vector<uint64_t> PeerCache::indices_of(const std::string& key) const {
    std::vector<uint64_t> out;
    for (auto it = store_.lower_bound({key, 0}); it != store_.end() && it->first.first == key;
         ++it)
        out.push_back(it->first.second);
    return out;
}

std::vector<std::pair<std::string, uint64_t>> PeerCache::entries() const {
    std::vector<std::pair<std::string, uint64_t>> out;
    out.reserve(store_.size());
    for (const auto& [id, seg] : store_) out.push_back(id);
    return out;
}

// --- trace digest ----------------------------------------------------------

struct Sim::TraceDigest {
    EVP_MD_CTX* ctx = nullptr;
    std::ofstream file;

    explicit TraceDigest(const std::string& path) {
        ctx = EVP_MD_CTX_new();
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
            fail(Errc::config_error, "cannot initialize trace digest");
        if (!path.empty()) {
            file.open(path, std::ios::trunc);
            if (!file) fail(Errc::config_error, "cannot open trace file " + path);
        }
    }
    TraceDigest(const TraceDigest&) = delete;
    ~TraceDigest() { EVP_MD_CTX_free(ctx); }

    void line(const std::string& s) {
        if (EVP_DigestUpdate(ctx, s.data(), s.size()) != 1)
            fail(Errc::config_error, "trace digest update failed");
        if (file.is_open()) file << s;
    }

    std::string hex() const {
        EVP_MD_CTX* copy = EVP_MD_CTX_new();
        if (!copy || EVP_MD_CTX_copy_ex(copy, ctx) != 1)
            fail(Errc::config_error, "trace digest copy failed");
        unsigned char d[EVP_MAX_MD_SIZE];
        unsigned int n = 0;
        EVP_DigestFinal_ex(copy, d, &n);
        EVP_MD_CTX_free(copy);
        static const char* k = "0123456789abcdef";
        std::string out;
        out.reserve(2 * n);
        for (unsigned int i = 0; i < n; ++i) {
            out.push_back(k[d[i] >> 4]);
            out.push_back(k[d[i] & 0xf]);
        }
        return out;
    }
};

// --- construction ----------------------------------------------------------

namespace {

std::vector<RingId> make_peer_ids(const Config& cfg) {
    if (cfg.peers < 1) fail(Errc::config_error, "need at least one peer");
    if (cfg.ring_bits < 63 &&
        static_cast<uint64_t>(cfg.peers) > (uint64_t{1} << cfg.ring_bits))
        fail(Errc::config_error, "more peers than ring positions");
    std::set<RingId> ids;
    for (uint64_t i = 0; static_cast<int>(ids.size()) < cfg.peers; ++i) {
        std::string name =
            "peer/" + std::to_string(cfg.seed) + "/" + std::to_string(i);
        ids.insert(dht::hash_key(name, cfg.ring_bits));
    }
    return {ids.begin(), ids.end()};
}

const Config& validated(const Config& cfg) {
    cfg.spec.validate();
    if (cfg.cache_capacity < 0) fail(Errc::config_error, "negative cache capacity");
    if (cfg.cost.per_message_ns < 0 || cfg.cost.per_byte_ns < 0 || cfg.cost.per_item_ns < 0)
        fail(Errc::config_error, "negative cost model entry");
    return cfg;
}

} // namespace

Sim::Sim(const Config& cfg)
    : cfg_(validated(cfg)),
      ring_(make_peer_ids(cfg_), cfg_.ring_bits),
      peers_(ring_.nodes()),
      index_(ring_),
      trace_(std::make_shared<TraceDigest>(cfg_.trace_path)) {
    for (RingId p : peers_)
        state_.emplace(p, PeerState{PeerCache(cfg_.cache_capacity), {}, {}});
}

// --- scheduling --------------------------------------------------------------

void Sim::net_send(RingId src, RingId dst, MsgKind kind, std::string info, size_t size,
                   int64_t extra_delay, std::function<void()> fn) {
    int64_t latency = extra_delay;
    uint64_t id = 0;
    if (src != dst) {
        latency += cfg_.cost.per_message_ns +
                   static_cast<int64_t>(size) * cfg_.cost.per_byte_ns;
        id = next_msg_id_++;
    }
    queue_.push(
        {now_ + latency, seq_++, id, src, dst, kind, std::move(info), size, std::move(fn)});
}

void Sim::local_after(RingId peer, int64_t delay, std::function<void()> fn) {
    net_send(peer, peer, MsgKind::ack, "", 0, delay, std::move(fn));
}

void Sim::drain() {
    if (draining_) fail(Errc::config_error, "nested event loop");
    draining_ = true;
    try {
        while (!queue_.empty()) {
            Event ev = queue_.top();
            queue_.pop();
            now_ = ev.time;
            metrics_.wall_time_ns = now_;
            if (ev.src != ev.dst) {
                metrics_.messages += 1;
                metrics_.bytes_sent += static_cast<int64_t>(ev.size);
                std::string line = std::to_string(ev.time) + "\t" + std::to_string(ev.msg_id) +
                                   "\t" + std::to_string(ev.src) + "\t" +
                                   std::to_string(ev.dst) + "\t" + msg_kind_name(ev.kind) +
                                   "\t" + ev.info + "\t" + std::to_string(ev.size) + "\n";
                trace_->line(line);
            }
            if (ev.fn) ev.fn();
        }
    } catch (...) {
        queue_ = {};
        for (auto& [p, st] : state_) st.pending.clear();
        draining_ = false;
        throw;
    }
    draining_ = false;
}

// --- index operations ---------------------------------------------------------

namespace {
int64_t wire_latency(const CostModel& c, size_t size) {
    return c.per_message_ns + static_cast<int64_t>(size) * c.per_byte_ns;
}
} // namespace

std::vector<Locator> Sim::dht_get(RingId from, const std::string& key) {
    dht::RouteResult r = ring_.route(from, dht::hash_key(key, cfg_.ring_bits));
    metrics_.routing_hops += r.hops();
    std::vector<Locator> result = index_.apply_get(r.owner, key);
    int64_t t = 0;
    size_t lsz = kMsgHeader + key.size();
    for (size_t i = 0; i + 1 < r.path.size(); ++i) {
        net_send(r.path[i], r.path[i + 1], MsgKind::lookup, key, lsz, t, nullptr);
        t += wire_latency(cfg_.cost, lsz);
    }
    if (r.owner != from) {
        net_send(r.owner, from, MsgKind::lookup_resp, key, kLocatorBytes, t, nullptr);
        t += wire_latency(cfg_.cost, kLocatorBytes);
        size_t gsz = kMsgHeader + key.size();
        net_send(from, r.owner, MsgKind::get, key, gsz, t, nullptr);
        t += wire_latency(cfg_.cost, gsz);
        size_t rsz = kMsgHeader + kLocatorBytes * result.size();
        net_send(r.owner, from, MsgKind::get_resp, key, rsz, t, nullptr);
    }
    return result;
}

void Sim::dht_put(RingId from, const std::string& key, const Locator& loc) {
    dht::RouteResult r = ring_.route(from, dht::hash_key(key, cfg_.ring_bits));
    metrics_.routing_hops += r.hops();
    index_.apply_put(r.owner, key, loc);
    int64_t t = 0;
    size_t lsz = kMsgHeader + key.size();
    for (size_t i = 0; i + 1 < r.path.size(); ++i) {
        net_send(r.path[i], r.path[i + 1], MsgKind::lookup, key, lsz, t, nullptr);
        t += wire_latency(cfg_.cost, lsz);
    }
    if (r.owner != from) {
        net_send(r.owner, from, MsgKind::lookup_resp, key, kLocatorBytes, t, nullptr);
        t += wire_latency(cfg_.cost, kLocatorBytes);
        size_t psz = kMsgHeader + key.size() + kLocatorBytes;
        net_send(from, r.owner, MsgKind::put, key, psz, t, nullptr);
        t += wire_latency(cfg_.cost, psz);
        net_send(r.owner, from, MsgKind::ack, key, 12, t, nullptr);
    }
}

void Sim::dht_remove(RingId from, const std::string& key, const Locator& loc) {
    dht::RouteResult r = ring_.route(from, dht::hash_key(key, cfg_.ring_bits));
    metrics_.routing_hops += r.hops();
    index_.apply_remove(r.owner, key, loc);
    int64_t t = 0;
    size_t lsz = kMsgHeader + key.size();
    for (size_t i = 0; i + 1 < r.path.size(); ++i) {
        net_send(r.path[i], r.path[i + 1], MsgKind::lookup, key, lsz, t, nullptr);
        t += wire_latency(cfg_.cost, lsz);
    }
    if (r.owner != from) {
        net_send(r.owner, from, MsgKind::lookup_resp, key, kLocatorBytes, t, nullptr);
        t += wire_latency(cfg_.cost, kLocatorBytes);
        size_t rsz = kMsgHeader + key.size() + kLocatorBytes;
        net_send(from, r.owner, MsgKind::remove, key, rsz, t, nullptr);
        t += wire_latency(cfg_.cost, rsz);
        net_send(r.owner, from, MsgKind::ack, key, 12, t, nullptr);
    }
}

// --- grids -----------------------------------------------------------------

const Calendar& Sim::grid_of(const std::string& key) const {
    auto it = grids_.find(key);
    if (it == grids_.end()) fail(Errc::config_error, "no grid recorded for " + key);
    return it->second;
}

void Sim::note_grid(const std::string& key, const Calendar& grid) {
    auto [it, fresh] = grids_.emplace(key, grid);
    if (!fresh && (it->second.start() != grid.start() ||
                   it->second.granularity() != grid.granularity()))
        fail(Errc::config_error, "conflicting grids for " + key);
}

RingId Sim::placement_owner(const std::string& key, uint64_t seg) const {
    return ring_.successor(dht::hash_key(seg_label(key, seg), cfg_.ring_bits));
}

// --- cache + publication -----------------------------------------------------

Locator Sim::run_locator(RingId peer, const std::string& key, uint64_t first,
                         uint64_t last) const {
    const Calendar& g = grid_of(key);
    int64_t core = cfg_.spec.core_len;
    return {peer, g.grid_time(static_cast<int64_t>(first) * core),
            g.grid_time((static_cast<int64_t>(last) + 1) * core - 1)};
}

void Sim::cache_insert(RingId peer, Segment seg) {
    Calendar grid(seg.calendar.grid_time(seg.local_of_global(0)),
                  seg.calendar.granularity(), 0);
    note_grid(seg.name, grid);
    if (cfg_.cache_capacity == 0) return;
    auto& st = state_.at(peer);
    std::string key = seg.name;
    std::vector<Segment> evicted = st.cache.insert(std::move(seg));
    std::set<std::string> touched{key};
    for (const Segment& e : evicted) touched.insert(e.name);
    for (const std::string& k : touched) sync_publication(peer, k);
}

void Sim::sync_publication(RingId peer, const std::string& key) {
    auto& st = state_.at(peer);
    std::vector<std::pair<uint64_t, uint64_t>> actual;
    for (uint64_t i : st.cache.indices_of(key)) {
        if (!actual.empty() && actual.back().second + 1 == i)
            actual.back().second = i;
        else
            actual.emplace_back(i, i);
    }
    std::vector<std::pair<uint64_t, uint64_t>> previous;
    if (auto it = st.published.find(key); it != st.published.end()) previous = it->second;

    for (const auto& run : previous)
        if (std::find(actual.begin(), actual.end(), run) == actual.end())
            dht_remove(peer, key, run_locator(peer, key, run.first, run.second));
    for (const auto& run : actual)
        if (std::find(previous.begin(), previous.end(), run) == previous.end())
            dht_put(peer, key, run_locator(peer, key, run.first, run.second));

    if (actual.empty())
        st.published.erase(key);
    else
        st.published[key] = std::move(actual);
}

bool Sim::locator_covers(const std::string& key, const Locator& loc, uint64_t seg) const {
    const Calendar& g = grid_of(key);
    int64_t core = cfg_.spec.core_len;
    int64_t first = g.grid_index(loc.start) / core;
    int64_t last = (g.grid_index(loc.end) + 1) / core - 1;
    return first <= static_cast<int64_t>(seg) && static_cast<int64_t>(seg) <= last;
}

// --- loading ------------------------------------------------------------------

void Sim::load_series(const std::string& name, const TimeSeries& s) {
    expr::ExprPtr leaf = expr::parse(name);
    if (!leaf->is_base())
        fail(Errc::config_error, "series name must be a plain identifier: " + name);
    std::string key = "v1:" + name;
    if (loaded_.count(key)) fail(Errc::duplicate_series, name);
    loaded_.emplace(key, s.calendar());
    note_grid(key, Calendar(s.calendar().start(), s.calendar().granularity(), 0));
    for (Segment& seg : cut_segments(key, s, cfg_.spec))
        cache_insert(placement_owner(key, seg.index), std::move(seg));
    drain();
}

TimeSeries synthetic_walk(int64_t n, uint64_t seed, double empty_frac,
                          double unknown_frac, Timestamp start, Granularity g) {
    if (n < 1) fail(Errc::config_error, "series length must be positive");
    if (empty_frac < 0 || unknown_frac < 0 || empty_frac + unknown_frac > 1)
        fail(Errc::config_error, "null fractions out of range");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> step(-1.0, 1.0);
    std::vector<Value> vals;
    vals.reserve(static_cast<size_t>(n));
    double level = 100.0;
    for (int64_t i = 0; i < n; ++i) {
        level += step(rng);
        double u = unit(rng);
        if (u < empty_frac)
            vals.push_back(Value::empty());
        else if (u < empty_frac + unknown_frac)
            vals.push_back(Value::unknown());
        else
            vals.push_back(Value::real(level));
    }
    return TimeSeries(Calendar(start, g, n), std::move(vals));
}

void Sim::generate_series(const std::string& name, int64_t n, uint64_t seed,
                          double empty_frac, double unknown_frac, Timestamp start,
                          Granularity g) {
    load_series(name, synthetic_walk(n, seed, empty_frac, unknown_frac, start, g));
}

// --- planning -------------------------------------------------------------------

Sim::PlanPtr Sim::make_plan(RingId at, const expr::ExprPtr& tree,
                            const std::vector<uint64_t>& segs) {
    auto plan = std::make_shared<Plan>();
    plan->tree = tree;
    plan->key = "v1:" + expr::serialize(tree);
    std::vector<Locator> locs = dht_get(at, plan->key);
    bool base = tree->is_base();
    std::vector<uint64_t> to_compute;
    for (uint64_t seg : segs) {
        const Locator* holder = nullptr;
        for (const Locator& lc : locs)
            if (locator_covers(plan->key, lc, seg)) {
                holder = &lc;
                break;
            }
        if (holder) {
            plan->tasks[seg] = {base ? Task::Kind::fetch_base : Task::Kind::cache_hit,
                                holder->peer_id};
        } else if (base) {
            if (!loaded_.count(plan->key)) fail(Errc::unknown_series, tree->base);
            // loaded but evicted everywhere: point at the placement owner; the
            // fetch will miss there and surface GapError
            plan->tasks[seg] = {Task::Kind::fetch_base, placement_owner(plan->key, seg)};
        } else {
            plan->tasks[seg] = {Task::Kind::compute, placement_owner(plan->key, seg)};
            to_compute.push_back(seg);
        }
    }
    metrics_.cache_misses += static_cast<int64_t>(to_compute.size());
    if (!to_compute.empty())
        for (const expr::Arg& a : tree->args)
            if (const expr::ExprPtr* child = std::get_if<expr::ExprPtr>(&a))
                plan->children.push_back(make_plan(at, *child, to_compute));
    return plan;
}

size_t Sim::plan_wire_size(const Plan& plan) {
    size_t sz = kMsgHeader + plan.key.size() + kLocatorBytes * plan.tasks.size();
    for (const auto& child : plan.children) sz += plan_wire_size(*child);
    return sz;
}

// --- execution ---------------------------------------------------------------------

void Sim::obtain(RingId who, const PlanPtr& plan, uint64_t seg,
                 std::function<void(const Segment&)> cb, int attempt) {
    auto& st = state_.at(who);
    if (const Segment* hit = st.cache.find(plan->key, seg)) {
        metrics_.cache_hits += 1;
        local_after(who, 0, [cb = std::move(cb), copy = *hit] { cb(copy); });
        return;
    }
    auto it = plan->tasks.find(seg);
    if (it == plan->tasks.end())
        fail(Errc::config_error, "segment missing from plan: " + seg_label(plan->key, seg));
    const Task& task = it->second;
    switch (task.kind) {
    case Task::Kind::cache_hit:
    case Task::Kind::fetch_base:
        if (task.peer == who) {
            handle_miss(who, plan, seg, std::move(cb), attempt + 1);
            return;
        }
        fetch_from(who, task.peer, plan, seg, std::move(cb), attempt);
        return;
    case Task::Kind::compute:
        if (task.peer == who) {
            start_compute(who, plan, seg, std::move(cb));
            return;
        }
        net_send(who, task.peer, MsgKind::seg_fetch, seg_label(plan->key, seg),
                 plan_wire_size(*plan) + 8, 0,
                 [this, ex = task.peer, who, plan, seg, cb = std::move(cb)]() mutable {
                     start_compute(
                         ex, plan, seg,
                         [this, ex, who, plan, seg,
                          cb = std::move(cb)](const Segment& s) mutable {
                             metrics_.segments_fetched += 1;
                             net_send(ex, who, MsgKind::seg_data, seg_label(plan->key, seg),
                                      kMsgHeader + wire_size(s), 0,
                                      [cb = std::move(cb), copy = s] { cb(copy); });
                         });
                 });
        return;
    }
}

void Sim::fetch_from(RingId who, RingId holder, const PlanPtr& plan, uint64_t seg,
                     std::function<void(const Segment&)> cb, int attempt) {
    net_send(who, holder, MsgKind::seg_fetch, seg_label(plan->key, seg),
             kMsgHeader + plan->key.size() + 8, 0,
             [this, who, holder, plan, seg, cb = std::move(cb), attempt]() mutable {
                 auto& hst = state_.at(holder);
                 if (const Segment* h = hst.cache.find(plan->key, seg)) {
                     metrics_.cache_hits += 1;
                     metrics_.segments_fetched += 1;
                     net_send(holder, who, MsgKind::seg_data, seg_label(plan->key, seg),
                              kMsgHeader + wire_size(*h), 0,
                              [cb = std::move(cb), copy = *h] { cb(copy); });
                     return;
                 }
                 // stale locator: tell the requester, who re-plans
                 net_send(holder, who, MsgKind::seg_data,
                          seg_label(plan->key, seg) + " miss", kMsgHeader + 1, 0,
                          [this, who, plan, seg, cb = std::move(cb), attempt]() mutable {
                              handle_miss(who, plan, seg, std::move(cb), attempt + 1);
                          });
             });
}

void Sim::handle_miss(RingId at, const PlanPtr& plan, uint64_t seg,
                      std::function<void(const Segment&)> cb, int attempt) {
    if (attempt > 4)
        fail(Errc::gap_error, seg_label(plan->key, seg) + " unavailable after retries");
    std::vector<Locator> locs = dht_get(at, plan->key);
    for (const Locator& lc : locs) {
        if (!locator_covers(plan->key, lc, seg)) continue;
        if (lc.peer_id == at) {
            if (const Segment* h = state_.at(at).cache.find(plan->key, seg)) {
                metrics_.cache_hits += 1;
                local_after(at, 0, [cb = std::move(cb), copy = *h] { cb(copy); });
                return;
            }
            continue;
        }
        fetch_from(at, lc.peer_id, plan, seg, std::move(cb), attempt);
        return;
    }
    if (plan->tree->is_base())
        fail(Errc::gap_error, "base segment evicted everywhere: " + seg_label(plan->key, seg));
    obtain(at, make_plan(at, plan->tree, {seg}), seg, std::move(cb), attempt);
}

void Sim::start_compute(RingId executor, const PlanPtr& plan, uint64_t seg,
                        std::function<void(const Segment&)> done) {
    auto& st = state_.at(executor);
    if (const Segment* hit = st.cache.find(plan->key, seg)) {
        metrics_.cache_hits += 1;
        local_after(executor, 0, [done = std::move(done), copy = *hit] { done(copy); });
        return;
    }
    std::pair<std::string, uint64_t> id{plan->key, seg};
    auto [pit, fresh] = st.pending.try_emplace(id);
    pit->second.push_back(std::move(done));
    if (!fresh) return; // computation already in flight; we queued behind it

    if (plan->children.empty())
        fail(Errc::config_error, "compute task without inputs: " + seg_label(plan->key, seg));
    size_t nkids = plan->children.size();
    auto gathered = std::make_shared<std::vector<Segment>>(nkids);
    auto remaining = std::make_shared<size_t>(nkids);
    for (size_t k = 0; k < nkids; ++k) {
        obtain(executor, plan->children[k], seg,
               [this, executor, plan, seg, gathered, remaining, k](const Segment& s) {
                   (*gathered)[k] = s;
                   if (--*remaining > 0) return;
                   Segment out =
                       compute_from_children(plan->tree, plan->key, *gathered);
                   metrics_.segments_computed += 1;
                   int64_t delay =
                       cfg_.cost.per_item_ns * static_cast<int64_t>(out.values.size()) *
                       static_cast<int64_t>(gathered->size());
                   local_after(executor, delay,
                               [this, executor, out = std::move(out),
                                id = std::make_pair(plan->key, seg)] {
                                   cache_insert(executor, out);
                                   auto& stt = state_.at(executor);
                                   auto w = stt.pending.find(id);
                                   if (w == stt.pending.end()) return;
                                   auto waiters = std::move(w->second);
                                   stt.pending.erase(w);
                                   for (auto& fn : waiters) fn(out);
                               });
               });
    }
}

namespace {

int64_t window_at(const expr::Expr& e, size_t i) {
    return std::get<expr::WindowSize>(e.args.at(i)).w;
}
double scalar_at(const expr::Expr& e, size_t i) {
    return std::get<expr::Scalar>(e.args.at(i)).v;
}

} // namespace

Segment Sim::compute_from_children(const expr::ExprPtr& tree, const std::string& out_key,
                                   const std::vector<Segment>& kids) const {
    const std::string& op = tree->op;
    if (op == "MAVG") return mavg_on_segment(kids[0], window_at(*tree, 1), out_key);
    if (op == "EMA")
        return ema_on_segment(kids[0], scalar_at(*tree, 1), window_at(*tree, 2), out_key);
    if (op == "MOM") return mom_on_segment(kids[0], window_at(*tree, 1), out_key);
    if (op == "SCALE") return scale_on_segment(kids[0], scalar_at(*tree, 1), out_key);
    if (op == "MSUB") return msub_on_segments(kids[0], kids[1], out_key);
    if (op == "SEL")
        return sel_on_segment(
            kids[0], std::get<expr::PredicateSpec>(tree->args.at(1)).to_predicate(), out_key);
    if (op == "JOIN")
        return join_on_segments(
            kids, map_fn(std::get<expr::FnName>(tree->args.back()).name), out_key);
    fail(Errc::unknown_operator, op);
}

// --- queries -----------------------------------------------------------------------

TimeSeries Sim::query(const std::string& expr_text, std::optional<Timestamp> from,
                      std::optional<Timestamp> to) {
    expr::ExprPtr tree = expr::expand_macros(expr::canonicalize(expr::parse(expr_text)));
    std::vector<std::string> leaves = expr::base_leaves(tree);
    const Calendar* grid = nullptr;
    for (const std::string& leaf : leaves) {
        auto it = loaded_.find("v1:" + leaf);
        if (it == loaded_.end()) fail(Errc::unknown_series, leaf);
        if (!grid)
            grid = &it->second;
        else
            require_same_calendar(*grid, it->second);
    }
    int64_t n = grid->length();
    if (n == 0) fail(Errc::out_of_range, "series has no values");
    int64_t p0 = from ? grid->index_of(*from) : 0;
    int64_t p1 = to ? grid->index_of(*to) : n - 1;
    if (p1 < p0) fail(Errc::out_of_range, "query interval is reversed");

    RingId coordinator = peers_[query_counter_ % peers_.size()];
    ++query_counter_;

    try {
        int64_t reach = expr::total_reach(tree);
        if (!locally_computable(cfg_.spec, reach)) {
            metrics_.fallback_evals += 1;
            return fallback_query(coordinator, tree, p0, p1, *grid);
        }
        int64_t core = cfg_.spec.core_len;
        std::vector<uint64_t> segs;
        for (int64_t i = p0 / core; i <= p1 / core; ++i)
            segs.push_back(static_cast<uint64_t>(i));
        PlanPtr plan = make_plan(coordinator, tree, segs);
        auto got = std::make_shared<std::map<uint64_t, Segment>>();
        for (uint64_t seg : segs)
            obtain(coordinator, plan, seg,
                   [got, seg](const Segment& s) { got->emplace(seg, s); });
        drain();
        if (got->size() != segs.size())
            fail(Errc::config_error, "query did not complete");
        std::vector<Segment> parts;
        parts.reserve(got->size());
        for (auto& [i, s] : *got) parts.push_back(std::move(s));
        return assemble(parts, p0, p1);
    } catch (...) {
        queue_ = {};
        for (auto& [p, st] : state_) st.pending.clear();
        throw;
    }
}

namespace {
int64_t op_count(const expr::ExprPtr& t) {
    if (t->is_base()) return 0;
    int64_t n = 1;
    for (const expr::Arg& a : t->args)
        if (const expr::ExprPtr* c = std::get_if<expr::ExprPtr>(&a)) n += op_count(*c);
    return n;
}
} // namespace

TimeSeries Sim::fallback_query(RingId coordinator, const expr::ExprPtr& tree, int64_t p0,
                               int64_t p1, const Calendar& grid) {
    // The chain reaches past what halos can answer: pull the base segments
    // over the widened interval to the coordinator and evaluate centrally.
    // Slice-start clamping only pollutes positions below p0, which the
    // returned clip discards, so the result is exact.
    int64_t reach = expr::total_reach(tree);
    int64_t e0 = std::max<int64_t>(0, p0 - reach);
    expr::Store store;
    for (const std::string& leaf : expr::base_leaves(tree))
        store.emplace(leaf, fetch_base_range(coordinator, leaf, grid, e0, p1));
    local_after(coordinator,
                cfg_.cost.per_item_ns * (p1 - e0 + 1) * op_count(tree), nullptr);
    TimeSeries full = expr::evaluate(tree, store);
    drain();
    return full.slice(grid.grid_time(p0), grid.grid_time(p1));
}

TimeSeries Sim::fetch_base_range(RingId at, const std::string& name, const Calendar& grid,
                                 int64_t first_pos, int64_t last_pos) {
    (void)grid;
    expr::ExprPtr leaf = expr::Expr::make_base(name);
    int64_t core = cfg_.spec.core_len;
    std::vector<uint64_t> segs;
    for (int64_t i = first_pos / core; i <= last_pos / core; ++i)
        segs.push_back(static_cast<uint64_t>(i));
    PlanPtr plan = make_plan(at, leaf, segs);
    auto got = std::make_shared<std::map<uint64_t, Segment>>();
    for (uint64_t seg : segs)
        obtain(at, plan, seg, [got, seg](const Segment& s) { got->emplace(seg, s); });
    drain();
    if (got->size() != segs.size()) fail(Errc::config_error, "base fetch incomplete");
    std::vector<Segment> parts;
    parts.reserve(got->size());
    for (auto& [i, s] : *got) parts.push_back(std::move(s));
    return assemble(parts, first_pos, last_pos);
}

// --- coherence -----------------------------------------------------------------------

bool Sim::coherent(std::string* why) const {
    auto complain = [why](const std::string& text) {
        if (why) *why = text;
        return false;
    };
    std::set<std::tuple<std::string, RingId, uint64_t>> advertised;
    for (const auto& [key, loc] : index_.all_entries()) {
        auto git = grids_.find(key);
        if (git == grids_.end()) return complain("locator for unknown key " + key);
        const Calendar& g = git->second;
        int64_t core = cfg_.spec.core_len;
        int64_t first = g.grid_index(loc.start) / core;
        int64_t last = (g.grid_index(loc.end) + 1) / core - 1;
        if (first < 0 || last < first)
            return complain("malformed locator interval for " + key);
        for (int64_t i = first; i <= last; ++i) {
            bool fresh =
                advertised.emplace(key, loc.peer_id, static_cast<uint64_t>(i)).second;
            if (!fresh)
                return complain("overlapping locators for " + seg_label(key, i) + " at peer " +
                                std::to_string(loc.peer_id));
        }
    }
    std::set<std::tuple<std::string, RingId, uint64_t>> cached;
    for (const auto& [peer, st] : state_)
        for (const auto& [key, idx] : st.cache.entries())
            cached.emplace(key, peer, idx);
    if (advertised == cached) return true;
    for (const auto& t : advertised)
        if (!cached.count(t))
            return complain("locator without cached segment: " +
                            seg_label(std::get<0>(t), std::get<2>(t)) + " at peer " +
                            std::to_string(std::get<1>(t)));
    for (const auto& t : cached)
        if (!advertised.count(t))
            return complain("cached segment without locator: " +
                            seg_label(std::get<0>(t), std::get<2>(t)) + " at peer " +
                            std::to_string(std::get<1>(t)));
    return complain("locator/cache mismatch");
}

// --- reporting ------------------------------------------------------------------------

std::string Sim::trace_digest() const { return trace_->hex(); }

std::string Sim::metrics_document() const {
    std::ostringstream o;
    o << "peers: " << cfg_.peers << "\n";
    o << "ring_bits: " << cfg_.ring_bits << "\n";
    o << "core_len: " << cfg_.spec.core_len << "\n";
    o << "halo: " << cfg_.spec.halo << "\n";
    o << "cache_capacity: " << cfg_.cache_capacity << "\n";
    o << "seed: " << cfg_.seed << "\n";
    o << "cost_per_message_ns: " << cfg_.cost.per_message_ns << "\n";
    o << "cost_per_byte_ns: " << cfg_.cost.per_byte_ns << "\n";
    o << "cost_per_item_ns: " << cfg_.cost.per_item_ns << "\n";
    o << "routing_hops: " << metrics_.routing_hops << "\n";
    o << "messages: " << metrics_.messages << "\n";
    o << "bytes_sent: " << metrics_.bytes_sent << "\n";
    o << "cache_hits: " << metrics_.cache_hits << "\n";
    o << "cache_misses: " << metrics_.cache_misses << "\n";
    o << "segments_computed: " << metrics_.segments_computed << "\n";
    o << "segments_fetched: " << metrics_.segments_fetched << "\n";
    o << "fallback_evals: " << metrics_.fallback_evals << "\n";
    o << "wall_time_ns: " << metrics_.wall_time_ns << "\n";
    o << "trace_digest: " << trace_digest() << "\n";
    return o.str();
}

size_t Sim::total_cached_segments() const {
    size_t n = 0;
    for (const auto& [peer, st] : state_) n += st.cache.size();
    return n;
}

// --- workload scripts --------------------------------------------------------------------

namespace {

std::vector<std::string> tokenize_line(const std::string& line, int lineno) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        if (line[i] == '#') break;
        std::string tok;
        if (line[i] == '"') {
            ++i;
            while (i < line.size() && line[i] != '"') tok.push_back(line[i++]);
            if (i == line.size())
                fail(Errc::parse_error,
                     "line " + std::to_string(lineno) + ": unterminated quote");
            ++i;
        } else {
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
                tok.push_back(line[i++]);
        }
        out.push_back(std::move(tok));
    }
    return out;
}

int64_t parse_int_arg(const std::string& tok, int lineno) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        fail(Errc::parse_error, "line " + std::to_string(lineno) + ": not an integer: " + tok);
    }
}

double parse_double_arg(const std::string& tok, int lineno) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        fail(Errc::parse_error, "line " + std::to_string(lineno) + ": not a number: " + tok);
    }
}

} // namespace

void Sim::run_script(std::istream& in, std::ostream& out) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<std::string> tok = tokenize_line(line, lineno);
        if (tok.empty()) continue;
        const std::string& cmd = tok[0];
        auto need = [&](size_t n) {
            if (tok.size() < n)
                fail(Errc::parse_error,
                     "line " + std::to_string(lineno) + ": " + cmd + " needs more arguments");
        };
        if (cmd == "load") {
            need(3);
            std::optional<Granularity> g;
            for (size_t i = 3; i < tok.size(); i += 2) {
                need(i + 2);
                if (tok[i] == "--granularity")
                    g = granularity_from_name(tok[i + 1]);
                else if (tok[i] == "--core" || tok[i] == "--halo") {
                    int64_t v = parse_int_arg(tok[i + 1], lineno);
                    int64_t have = tok[i] == "--core" ? cfg_.spec.core_len : cfg_.spec.halo;
                    if (loaded_.empty())
                        (tok[i] == "--core" ? cfg_.spec.core_len : cfg_.spec.halo) = v;
                    else if (v != have)
                        fail(Errc::config_error,
                             "line " + std::to_string(lineno) +
                                 ": segment geometry is fixed once data is loaded");
                    cfg_.spec.validate();
                } else
                    fail(Errc::parse_error,
                         "line " + std::to_string(lineno) + ": unknown flag " + tok[i]);
            }
            load_series(tok[1], io::load_series_file(tok[2], g));
            out << "loaded " << tok[1] << "\n";
        } else if (cmd == "gen") {
            need(3);
            uint64_t seed = cfg_.seed;
            double ef = 0, uf = 0;
            Timestamp start{};
            Granularity g = Granularity::day;
            for (size_t i = 3; i < tok.size(); i += 2) {
                need(i + 2);
                if (tok[i] == "--seed")
                    seed = static_cast<uint64_t>(parse_int_arg(tok[i + 1], lineno));
                else if (tok[i] == "--empty")
                    ef = parse_double_arg(tok[i + 1], lineno);
                else if (tok[i] == "--unknown")
                    uf = parse_double_arg(tok[i + 1], lineno);
                else if (tok[i] == "--start")
                    start = parse_timestamp(tok[i + 1]);
                else if (tok[i] == "--granularity")
                    g = granularity_from_name(tok[i + 1]);
                else
                    fail(Errc::parse_error,
                         "line " + std::to_string(lineno) + ": unknown flag " + tok[i]);
            }
            generate_series(tok[1], parse_int_arg(tok[2], lineno), seed, ef, uf, start, g);
            out << "generated " << tok[1] << " n=" << tok[2] << "\n";
        } else if (cmd == "query") {
            need(2);
            std::optional<Timestamp> from, to;
            for (size_t i = 2; i < tok.size(); i += 2) {
                need(i + 2);
                if (tok[i] == "--from")
                    from = parse_timestamp(tok[i + 1]);
                else if (tok[i] == "--to")
                    to = parse_timestamp(tok[i + 1]);
                else
                    fail(Errc::parse_error,
                         "line " + std::to_string(lineno) + ": unknown flag " + tok[i]);
            }
            TimeSeries r = query(tok[1], from, to);
            int64_t reals = 0, empties = 0, unknowns = 0;
            for (const Value& v : r.values()) {
                if (v.is_real())
                    ++reals;
                else if (v.is_empty())
                    ++empties;
                else
                    ++unknowns;
            }
            out << "result " << expr::series_name(expr::parse(tok[1])).text << " n="
                << r.length() << " real=" << reals << " empty=" << empties
                << " unknown=" << unknowns << "\n";
        } else if (cmd == "stats") {
            out << metrics_document();
        } else {
            fail(Errc::parse_error,
                 "line " + std::to_string(lineno) + ": unknown command " + cmd);
        }
    }
}

} // namespace tsgrid::sim
