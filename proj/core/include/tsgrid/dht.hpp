#pragma once

#include "tsgrid/errors.hpp"
#include "tsgrid/time.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tsgrid::dht {

/// Position on the identifier ring [0, 2^bits).
using RingId = uint64_t;

/// SHA-256 of the key string, truncated to `bits` bits. Deterministic across
/// runs and platforms; uniform over the ring.
RingId hash_key(std::string_view key, int bits);

/// Advertises that a peer caches one contiguous time range of a named
/// series (inclusive grid timestamps).
struct Locator {
    RingId peer_id = 0;
    Timestamp start{};
    Timestamp end{};

    friend bool operator==(const Locator&, const Locator&) = default;
};

/// Consulted nodes of one lookup, origin first, owner last.
struct RouteResult {
    RingId owner = 0;
    std::vector<RingId> path;

    int hops() const { return static_cast<int>(path.size()) - 1; }
};

/// Static identifier ring with per-node finger tables. Membership is fixed
/// at construction; routing uses only node-local knowledge (predecessor,
/// successor, fingers), so measured hop counts are honest.
class Ring {
public:
    Ring() = default;
    Ring(std::vector<RingId> ids, int bits);

    int bits() const { return bits_; }
    const std::vector<RingId>& nodes() const { return nodes_; }

    /// First node clockwise from id (inclusive): the owner of id. This is
    /// the brute-force oracle routing must agree with.
    RingId successor(RingId id) const;

    /// Node immediately after `node` on the ring (wraps; the node itself
    /// when it is alone).
    RingId next_node(RingId node) const;
    RingId predecessor(RingId node) const;

    /// finger[k] of a node: successor(node + 2^k).
    RingId finger(RingId node, int k) const;

    /// Greedy finger routing from `from` toward the owner of `id`.
    RouteResult route(RingId from, RingId id) const;

private:
    size_t index_of(RingId node) const;

    std::vector<RingId> nodes_; // sorted, unique
    std::vector<std::vector<RingId>> fingers_;
    int bits_ = 32;
    uint64_t mask_ = 0xffffffffu;
};

/// Locator index with Chord routing but synchronous application: the state
/// change happens immediately while hop counts report what routing cost.
/// The message-level simulation layers latency on top of this.
class LocatorIndex {
public:
    LocatorIndex() = default;
    explicit LocatorIndex(Ring ring) : ring_(std::move(ring)) {}

    const Ring& ring() const { return ring_; }

    struct Op {
        RingId owner = 0;
        int hops = 0;
    };

    /// Appends the locator at the key's owner unless the exact triple is
    /// already listed.
    Op put(RingId from, const std::string& key, const Locator& loc);

    /// Full list at the owner, insertion-ordered; empty when unknown.
    Op get(RingId from, const std::string& key, std::vector<Locator>& out) const;

    /// Removes the exact triple; no-op when absent; drops empty entries.
    Op remove(RingId from, const std::string& key, const Locator& loc);

    /// Store access at a known owner, for callers that route themselves
    /// (the peer simulation animates its own lookup messages).
    void apply_put(RingId owner, const std::string& key, const Locator& loc);
    std::vector<Locator> apply_get(RingId owner, const std::string& key) const;
    void apply_remove(RingId owner, const std::string& key, const Locator& loc);

    /// Everything a node owns (for coherence checks and tests).
    const std::map<std::string, std::vector<Locator>>& store_of(RingId node) const;

    /// All (key, locator) pairs in the index, in deterministic order.
    std::vector<std::pair<std::string, Locator>> all_entries() const;

private:
    Op locate(RingId from, const std::string& key) const;

    Ring ring_;
    std::map<RingId, std::map<std::string, std::vector<Locator>>> stores_;
};

/// Locators overlapping [t1, t2] (inclusive-end convention).
std::vector<Locator> filter_overlap(const std::vector<Locator>& locs, Timestamp t1, Timestamp t2);

} // namespace tsgrid::dht
