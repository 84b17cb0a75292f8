#pragma once

#include "tsgrid/calendar.hpp"
#include "tsgrid/value.hpp"

#include <span>
#include <utility>
#include <vector>

namespace tsgrid {

/// One (time, value) row of a series.
struct Item {
    Timestamp time;
    Value value;
};

/// A calendar-indexed dense vector of values: every calendar slot holds
/// exactly one Value, gaps are explicit Empty entries. Immutable after
/// construction; cheap to share read-only between threads.
class TimeSeries {
public:
    TimeSeries() = default;
    TimeSeries(Calendar calendar, std::vector<Value> values)
        : calendar_(calendar), values_(std::move(values)) {
        if (static_cast<int64_t>(values_.size()) != calendar_.length())
            fail(Errc::config_error, "value count does not match calendar length");
    }

    const Calendar& calendar() const { return calendar_; }
    int64_t length() const { return calendar_.length(); }
    std::span<const Value> values() const { return values_; }
    Value at(int64_t i) const { return values_.at(static_cast<size_t>(i)); }
    Item item(int64_t i) const { return {calendar_.time_at(i), at(i)}; }

    /// Sub-series on the grid range [from, to], inclusive.
    TimeSeries slice(Timestamp from, Timestamp to) const {
        int64_t i0 = calendar_.index_of(from);
        int64_t i1 = calendar_.index_of(to);
        if (i1 < i0) fail(Errc::out_of_range, "slice range is reversed");
        std::vector<Value> out(values_.begin() + i0, values_.begin() + i1 + 1);
        return TimeSeries(Calendar(from, calendar_.granularity(), i1 - i0 + 1), std::move(out));
    }

    friend bool operator==(const TimeSeries& a, const TimeSeries& b) = default;

private:
    Calendar calendar_;
    std::vector<Value> values_;
};

/// Pointwise addition on a shared calendar.
TimeSeries ts_add(const TimeSeries& a, const TimeSeries& b);

/// Pointwise scalar multiplication.
TimeSeries ts_scale(double s, const TimeSeries& series);

} // namespace tsgrid
