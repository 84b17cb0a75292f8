#include "tsgrid/segments.hpp"

#include "tsgrid/indicators.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>

namespace tsgrid {

namespace {

// Local index of the true series start (global position 0) in a segment;
// positive when the segment's window begins before the series does.
int64_t series_start_local(const Segment& s) {
    return s.spec.halo - s.core_global_start();
}

// Shared epilogue: positions before the series start are padding and must
// come out as "?" no matter what the kernel computed from clamped reads.
void stamp_virtual_prefix(const Segment& s, std::vector<Value>& vals) {
    int64_t cut = std::min<int64_t>(series_start_local(s),
                                    static_cast<int64_t>(vals.size()));
    for (int64_t i = 0; i < cut; ++i) vals[static_cast<size_t>(i)] = Value::unknown();
}

Segment derived_like(const Segment& in, std::string name, std::vector<Value> vals) {
    Segment out;
    out.name = std::move(name);
    out.index = in.index;
    out.spec = in.spec;
    out.calendar = in.calendar;
    stamp_virtual_prefix(in, vals);
    out.values = std::move(vals);
    return out;
}

void require_same_geometry(const Segment& a, const Segment& b) {
    if (a.index != b.index || !(a.spec == b.spec) || !(a.calendar == b.calendar))
        fail(Errc::spec_mismatch, "segments cover different grids");
}

// Window kernels see the series start in two ways. A segment overlapping the
// start clamps reads at the start's local index (the whole-series rule); a
// segment strictly after the start refuses to reach beyond its halo and
// yields "?" there, which only affects positions the core never includes as
// long as the reach fits the halo.
template <class Kernel>
std::vector<Value> run_window_kernel(const Segment& in, int64_t w, int64_t reach,
                                     Kernel kernel) {
    if (!locally_computable(in.spec, reach))
        fail(Errc::halo_too_small, "window " + std::to_string(w) +
                                       " reaches past the " +
                                       std::to_string(in.spec.halo) + "-value halo");
    std::vector<Value> out(in.values.size());
    int64_t start = series_start_local(in);
    if (start >= 0)
        kernel(in.values, static_cast<size_t>(start), detail::EdgePolicy::clamp, out);
    else
        kernel(in.values, size_t{0}, detail::EdgePolicy::unknown, out);
    return out;
}

} // namespace

Segment cut_segment(const std::string& name, const TimeSeries& s,
                    const SegmentSpec& spec, uint64_t index) {
    spec.validate();
    Segment out;
    out.name = name;
    out.index = index;
    out.spec = spec;
    int64_t left = out.core_global_start() - spec.halo;
    out.calendar = Calendar(s.calendar().grid_time(left), s.calendar().granularity(),
                            spec.seg_len());
    out.values.reserve(static_cast<size_t>(spec.seg_len()));
    for (int64_t j = 0; j < spec.seg_len(); ++j) {
        int64_t p = left + j;
        out.values.push_back(p >= 0 && p < s.length() ? s.at(p) : Value::unknown());
    }
    return out;
}

std::vector<Segment> cut_segments(const std::string& name, const TimeSeries& s,
                                  const SegmentSpec& spec) {
    std::vector<Segment> out;
    uint64_t count = spec.count_for(s.length());
    out.reserve(count);
    for (uint64_t i = 0; i < count; ++i) out.push_back(cut_segment(name, s, spec, i));
    return out;
}

TimeSeries assemble(std::span<const Segment> segs, int64_t first, int64_t last) {
    if (segs.empty()) fail(Errc::gap_error, "no segments to assemble");
    if (last < first) fail(Errc::out_of_range, "assembly range is reversed");

    const Segment& ref = segs[0];
    ref.spec.validate();
    std::map<uint64_t, const Segment*> by_index;
    for (const Segment& s : segs) {
        if (s.name != ref.name)
            fail(Errc::spec_mismatch, "segment of " + s.name + " mixed into " + ref.name);
        if (!(s.spec == ref.spec))
            fail(Errc::spec_mismatch, "segments use different geometries");
        if (static_cast<int64_t>(s.values.size()) != s.spec.seg_len())
            fail(Errc::spec_mismatch, "segment value count does not match its geometry");
        // same underlying grid: the time both segments assign to global
        // position 0 must agree
        Timestamp zero_a = s.calendar.grid_time(s.local_of_global(0));
        Timestamp zero_b = ref.calendar.grid_time(ref.local_of_global(0));
        if (!(zero_a == zero_b) || s.calendar.granularity() != ref.calendar.granularity())
            fail(Errc::spec_mismatch, "segments disagree on the underlying grid");
        by_index.emplace(s.index, &s);
    }

    std::vector<Value> vals;
    vals.reserve(static_cast<size_t>(last - first + 1));
    for (int64_t p = first; p <= last; ++p) {
        if (p < 0) fail(Errc::out_of_range, "assembly range starts before the series");
        uint64_t need = static_cast<uint64_t>(p / ref.spec.core_len);
        auto it = by_index.find(need);
        if (it == by_index.end())
            fail(Errc::gap_error, ref.name + " segment " + std::to_string(need) + " is missing");
        const Segment& s = *it->second;
        vals.push_back(s.values[static_cast<size_t>(s.local_of_global(p))]);
    }
    Calendar cal(ref.calendar.grid_time(ref.local_of_global(first)),
                 ref.calendar.granularity(), last - first + 1);
    return TimeSeries(cal, std::move(vals));
}

Segment mavg_on_segment(const Segment& in, int64_t w, const std::string& out_name) {
    auto vals = run_window_kernel(
        in, w, w - 1, [&](std::span<const Value> src, size_t edge,
                          detail::EdgePolicy policy, std::span<Value> dst) {
            detail::mavg_span(src, w, edge, policy, dst);
        });
    return derived_like(in, out_name, std::move(vals));
}

Segment ema_on_segment(const Segment& in, double alpha, int64_t w,
                       const std::string& out_name) {
    auto vals = run_window_kernel(
        in, w, w - 1, [&](std::span<const Value> src, size_t edge,
                          detail::EdgePolicy policy, std::span<Value> dst) {
            detail::ema_span(src, alpha, w, edge, policy, dst);
        });
    return derived_like(in, out_name, std::move(vals));
}

Segment mom_on_segment(const Segment& in, int64_t w, const std::string& out_name) {
    auto vals = run_window_kernel(
        in, w, w, [&](std::span<const Value> src, size_t edge,
                      detail::EdgePolicy policy, std::span<Value> dst) {
            detail::mom_span(src, w, edge, policy, dst);
        });
    return derived_like(in, out_name, std::move(vals));
}

Segment scale_on_segment(const Segment& in, double k, const std::string& out_name) {
    std::vector<Value> vals;
    vals.reserve(in.values.size());
    for (Value v : in.values) vals.push_back(value_scale(k, v));
    return derived_like(in, out_name, std::move(vals));
}

Segment sel_on_segment(const Segment& in, const Predicate& pred,
                       const std::string& out_name) {
    std::vector<Value> vals;
    vals.reserve(in.values.size());
    for (Value v : in.values) vals.push_back(pred.fn(v) ? v : Value::empty());
    return derived_like(in, out_name, std::move(vals));
}

Segment msub_on_segments(const Segment& a, const Segment& b, const std::string& out_name) {
    require_same_geometry(a, b);
    std::vector<Value> vals;
    vals.reserve(a.values.size());
    for (size_t i = 0; i < a.values.size(); ++i)
        vals.push_back(value_add(a.values[i], value_scale(-1.0, b.values[i])));
    return derived_like(a, out_name, std::move(vals));
}

Segment join_on_segments(std::span<const Segment> ins, const MapFn& fun,
                         const std::string& out_name) {
    if (ins.empty()) fail(Errc::empty_join, "join needs at least one segment");
    if (fun.arity >= 0 && fun.arity != static_cast<int>(ins.size()))
        fail(Errc::arity_error, fun.name + " takes " + std::to_string(fun.arity) +
                                    " values, got " + std::to_string(ins.size()));
    for (const Segment& s : ins) require_same_geometry(ins[0], s);
    std::vector<Value> vals;
    vals.reserve(ins[0].values.size());
    std::vector<Value> row(ins.size());
    for (size_t i = 0; i < ins[0].values.size(); ++i) {
        for (size_t k = 0; k < ins.size(); ++k) row[k] = ins[k].values[i];
        vals.push_back(fun.apply(row));
    }
    return derived_like(ins[0], out_name, std::move(vals));
}

// ---------------------------------------------------------------------------
// Wire format, version 1. All integers big-endian; values are a tag byte
// (0 real, 1 empty, 2 unknown) followed by the IEEE-754 bits for reals only.

namespace {

constexpr uint8_t kWireVersion = 1;

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

template <class T>
void put_be(std::vector<uint8_t>& out, T v) {
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(v);
    for (int shift = (sizeof(U) - 1) * 8; shift >= 0; shift -= 8)
        out.push_back(static_cast<uint8_t>(u >> shift));
}

class WireReader {
public:
    explicit WireReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

    uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }

    template <class T>
    T be() {
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (size_t i = 0; i < sizeof(T); ++i) u = (u << 8) | bytes_[pos_++];
        return static_cast<T>(u);
    }

    std::string str(size_t n) {
        need(n);
        std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(size_t n) {
        if (bytes_.size() - pos_ < n)
            fail(Errc::parse_error, "segment payload truncated");
    }

    std::span<const uint8_t> bytes_;
    size_t pos_ = 0;
};

} // namespace

std::vector<uint8_t> encode_segment(const Segment& s) {
    std::vector<uint8_t> out;
    out.reserve(wire_size(s));
    put_u8(out, kWireVersion);
    put_be(out, static_cast<uint32_t>(s.name.size()));
    out.insert(out.end(), s.name.begin(), s.name.end());
    put_be(out, static_cast<uint64_t>(s.index));
    put_be(out, static_cast<uint32_t>(s.spec.core_len));
    put_be(out, static_cast<uint32_t>(s.spec.halo));
    put_be(out, s.calendar.start().secs);
    put_u8(out, static_cast<uint8_t>(s.calendar.granularity()));
    put_be(out, static_cast<uint64_t>(s.values.size()));
    for (Value v : s.values) {
        if (v.is_real()) {
            put_u8(out, 0);
            put_be(out, std::bit_cast<uint64_t>(v.as_real()));
        } else {
            put_u8(out, v.is_empty() ? 1 : 2);
        }
    }
    return out;
}

Segment decode_segment(std::span<const uint8_t> bytes) {
    WireReader in(bytes);
    if (in.u8() != kWireVersion)
        fail(Errc::parse_error, "unsupported segment wire version");
    Segment s;
    uint32_t name_len = in.be<uint32_t>();
    s.name = in.str(name_len);
    s.index = in.be<uint64_t>();
    s.spec.core_len = in.be<uint32_t>();
    s.spec.halo = in.be<uint32_t>();
    s.spec.validate();
    int64_t start_secs = in.be<int64_t>();
    uint8_t gran = in.u8();
    if (gran > static_cast<uint8_t>(Granularity::week))
        fail(Errc::parse_error, "unknown granularity tag");
    uint64_t count = in.be<uint64_t>();
    if (count != static_cast<uint64_t>(s.spec.seg_len()))
        fail(Errc::parse_error, "segment value count does not match its geometry");
    if (count > bytes.size()) // every value takes at least one byte
        fail(Errc::parse_error, "segment payload truncated");
    s.calendar = Calendar(Timestamp{start_secs}, static_cast<Granularity>(gran),
                          static_cast<int64_t>(count));
    s.values.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint8_t tag = in.u8();
        if (tag == 0) {
            double v = std::bit_cast<double>(in.be<uint64_t>());
            if (!std::isfinite(v)) fail(Errc::parse_error, "non-finite value on the wire");
            s.values.push_back(Value::real(v));
        } else if (tag == 1) {
            s.values.push_back(Value::empty());
        } else if (tag == 2) {
            s.values.push_back(Value::unknown());
        } else {
            fail(Errc::parse_error, "unknown value tag");
        }
    }
    if (!in.done()) fail(Errc::parse_error, "trailing bytes after segment payload");
    return s;
}

size_t wire_size(const Segment& s) {
    size_t n = 1 + 4 + s.name.size() + 8 + 4 + 4 + 8 + 1 + 8;
    for (Value v : s.values) n += v.is_real() ? 9 : 1;
    return n;
}

} // namespace tsgrid
