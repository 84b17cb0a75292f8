#pragma once

#include "tsgrid/algebra.hpp"
#include "tsgrid/series.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tsgrid {

/// Fixed segmentation geometry: every segment stores `core_len` owned
/// positions plus `halo` positions of read-only context on each side.
struct SegmentSpec {
    int64_t core_len = 1024;
    int64_t halo = 128;

    void validate() const {
        if (core_len < 1) fail(Errc::config_error, "segment core must hold at least one value");
        if (halo < 0) fail(Errc::config_error, "segment halo must be non-negative");
    }
    int64_t seg_len() const { return core_len + 2 * halo; }

    /// Number of segments covering an n-value series.
    uint64_t count_for(int64_t n) const {
        if (n <= 0) return 0;
        return static_cast<uint64_t>((n + core_len - 1) / core_len);
    }

    friend bool operator==(const SegmentSpec&, const SegmentSpec&) = default;
};

/// A slice of the named series: core positions [index*core, index*core+core)
/// of the original grid plus halo context, padded with "?" wherever the
/// underlying series has no position (before its start or past its end).
/// values.size() is always core_len + 2*halo.
struct Segment {
    std::string name;
    uint64_t index = 0;
    SegmentSpec spec;
    Calendar calendar; // grid of the padded window, starting at the left halo
    std::vector<Value> values;

    int64_t core_global_start() const {
        return static_cast<int64_t>(index) * spec.core_len;
    }
    /// Local index of an original-grid position.
    int64_t local_of_global(int64_t p) const {
        return p - core_global_start() + spec.halo;
    }
    std::span<const Value> core() const {
        return std::span<const Value>(values).subspan(
            static_cast<size_t>(spec.halo), static_cast<size_t>(spec.core_len));
    }

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Cuts one segment out of a full series.
Segment cut_segment(const std::string& name, const TimeSeries& s,
                    const SegmentSpec& spec, uint64_t index);

/// Cuts the whole series into count_for(length) segments.
std::vector<Segment> cut_segments(const std::string& name, const TimeSeries& s,
                                  const SegmentSpec& spec);

/// Stitches segment cores back into a series over original-grid positions
/// [first, last]. Throws GapError when a needed segment is missing and
/// SpecMismatch when the segments disagree on name, geometry or grid.
TimeSeries assemble(std::span<const Segment> segs, int64_t first, int64_t last);

/// Whether an operator chain whose windows reach back `reach` positions can
/// run on any segment using only its halo context.
inline bool locally_computable(const SegmentSpec& spec, int64_t reach) {
    return reach <= spec.halo;
}

/// Per-segment operator kernels. Each consumes input segments of one shared
/// geometry and produces the same-index segment of the derived series
/// `out_name`. Window kernels throw HaloTooSmall when the window cannot be
/// answered from halo context alone; positions before the series start
/// follow the duplicate-the-first-item rule exactly as the whole-series
/// operators do.
Segment mavg_on_segment(const Segment& in, int64_t w, const std::string& out_name);
Segment ema_on_segment(const Segment& in, double alpha, int64_t w, const std::string& out_name);
Segment mom_on_segment(const Segment& in, int64_t w, const std::string& out_name);
Segment scale_on_segment(const Segment& in, double k, const std::string& out_name);
Segment sel_on_segment(const Segment& in, const Predicate& pred, const std::string& out_name);
Segment msub_on_segments(const Segment& a, const Segment& b, const std::string& out_name);
Segment join_on_segments(std::span<const Segment> ins, const MapFn& fun,
                         const std::string& out_name);

/// Byte-exact wire form (big-endian, versioned); decode(encode(s)) == s.
std::vector<uint8_t> encode_segment(const Segment& s);
Segment decode_segment(std::span<const uint8_t> bytes);

/// Size of encode_segment(s) without building it (for transfer accounting).
size_t wire_size(const Segment& s);

} // namespace tsgrid
