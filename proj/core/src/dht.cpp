#include "tsgrid/dht.hpp"

#include <openssl/evp.h>

#include <algorithm>

namespace tsgrid::dht {

namespace {

// x in (a, b] walking clockwise; a == b spans the whole ring.
bool in_open_closed(RingId x, RingId a, RingId b) {
    if (a == b) return true;
    if (a < b) return x > a && x <= b;
    return x > a || x <= b;
}

// x in (a, b) walking clockwise; a == b is everything except a itself.
bool in_open_open(RingId x, RingId a, RingId b) {
    if (a == b) return x != a;
    if (a < b) return x > a && x < b;
    return x > a || x < b;
}

} // namespace

RingId hash_key(std::string_view key, int bits) {
    if (bits < 1 || bits > 63)
        fail(Errc::config_error, "ring bit-width must lie in [1, 63]");
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(key.data(), key.size(), digest, &len, EVP_sha256(), nullptr) != 1 || len < 8)
        fail(Errc::config_error, "digest computation failed");
    uint64_t top = 0;
    for (int i = 0; i < 8; ++i) top = (top << 8) | digest[i];
    return top >> (64 - bits);
}

Ring::Ring(std::vector<RingId> ids, int bits) : bits_(bits) {
    if (bits < 1 || bits > 63)
        fail(Errc::config_error, "ring bit-width must lie in [1, 63]");
    mask_ = (uint64_t{1} << bits) - 1;
    if (ids.empty()) fail(Errc::ring_empty, "a ring needs at least one node");
    for (RingId id : ids)
        if (id > mask_) fail(Errc::config_error, "node id outside the ring");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    nodes_ = std::move(ids);

    fingers_.resize(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        fingers_[i].resize(static_cast<size_t>(bits_));
        for (int k = 0; k < bits_; ++k)
            fingers_[i][static_cast<size_t>(k)] =
                successor((nodes_[i] + (uint64_t{1} << k)) & mask_);
    }
}

RingId Ring::successor(RingId id) const {
    if (nodes_.empty()) fail(Errc::ring_empty, "ring has no nodes");
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id & mask_);
    return it == nodes_.end() ? nodes_.front() : *it;
}

size_t Ring::index_of(RingId node) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end() || *it != node)
        fail(Errc::config_error, "node " + std::to_string(node) + " is not a ring member");
    return static_cast<size_t>(it - nodes_.begin());
}

RingId Ring::next_node(RingId node) const {
    size_t i = index_of(node);
    return nodes_[(i + 1) % nodes_.size()];
}

RingId Ring::predecessor(RingId node) const {
    size_t i = index_of(node);
    return nodes_[(i + nodes_.size() - 1) % nodes_.size()];
}

RingId Ring::finger(RingId node, int k) const {
    if (k < 0 || k >= bits_) fail(Errc::config_error, "finger index outside [0, bits)");
    return fingers_[index_of(node)][static_cast<size_t>(k)];
}

RouteResult Ring::route(RingId from, RingId id) const {
    if (nodes_.empty()) fail(Errc::ring_empty, "ring has no nodes");
    id &= mask_;
    RouteResult out;
    out.path.push_back(from);
    RingId cur = from;
    // Each greedy step at least halves the clockwise distance, so bits_
    // iterations always suffice; the guard only catches implementation bugs.
    for (int guard = 0; guard <= bits_ + 1; ++guard) {
        if (in_open_closed(id, predecessor(cur), cur)) {
            out.owner = cur;
            return out;
        }
        RingId succ = next_node(cur);
        if (in_open_closed(id, cur, succ)) {
            out.owner = succ;
            out.path.push_back(succ);
            return out;
        }
        const std::vector<RingId>& table = fingers_[index_of(cur)];
        RingId next = succ;
        for (int k = bits_ - 1; k >= 0; --k) {
            RingId f = table[static_cast<size_t>(k)];
            if (f != cur && in_open_open(f, cur, id)) {
                next = f;
                break;
            }
        }
        out.path.push_back(next);
        cur = next;
    }
    fail(Errc::config_error, "ring routing did not converge");
}

LocatorIndex::Op LocatorIndex::locate(RingId from, const std::string& key) const {
    RouteResult r = ring_.route(from, hash_key(key, ring_.bits()));
    return {r.owner, r.hops()};
}

LocatorIndex::Op LocatorIndex::put(RingId from, const std::string& key, const Locator& loc) {
    Op op = locate(from, key);
    apply_put(op.owner, key, loc);
    return op;
}

LocatorIndex::Op LocatorIndex::get(RingId from, const std::string& key,
                                   std::vector<Locator>& out) const {
    Op op = locate(from, key);
    out = apply_get(op.owner, key);
    return op;
}

LocatorIndex::Op LocatorIndex::remove(RingId from, const std::string& key, const Locator& loc) {
    Op op = locate(from, key);
    apply_remove(op.owner, key, loc);
    return op;
}

void LocatorIndex::apply_put(RingId owner, const std::string& key, const Locator& loc) {
    std::vector<Locator>& list = stores_[owner][key];
    if (std::find(list.begin(), list.end(), loc) == list.end()) list.push_back(loc);
}

std::vector<Locator> LocatorIndex::apply_get(RingId owner, const std::string& key) const {
    auto node = stores_.find(owner);
    if (node == stores_.end()) return {};
    auto it = node->second.find(key);
    return it == node->second.end() ? std::vector<Locator>{} : it->second;
}

void LocatorIndex::apply_remove(RingId owner, const std::string& key, const Locator& loc) {
    auto node = stores_.find(owner);
    if (node == stores_.end()) return;
    auto it = node->second.find(key);
    if (it == node->second.end()) return;
    std::erase(it->second, loc);
    if (it->second.empty()) node->second.erase(it);
}

const std::map<std::string, std::vector<Locator>>& LocatorIndex::store_of(RingId node) const {
    static const std::map<std::string, std::vector<Locator>> empty;
    auto it = stores_.find(node);
    return it == stores_.end() ? empty : it->second;
}

std::vector<std::pair<std::string, Locator>> LocatorIndex::all_entries() const {
    std::vector<std::pair<std::string, Locator>> out;
    for (const auto& [node, store] : stores_)
        for (const auto& [key, locs] : store)
            for (const Locator& loc : locs) out.emplace_back(key, loc);
    return out;
}

std::vector<Locator> filter_overlap(const std::vector<Locator>& locs, Timestamp t1, Timestamp t2) {
    std::vector<Locator> out;
    for (const Locator& l : locs)
        if (l.start.secs <= t2.secs && l.end.secs >= t1.secs) out.push_back(l);
    return out;
}

} // namespace tsgrid::dht
