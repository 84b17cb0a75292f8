#pragma once

#include "tsgrid/errors.hpp"
#include "tsgrid/time.hpp"

#include <cstdint>

namespace tsgrid {

/// Maps the n consecutive time units from `start` onto vector indices
/// [0, n). index_of and time_at are inverse bijections on that range.
class Calendar {
public:
    Calendar() = default;
    Calendar(Timestamp start, Granularity g, int64_t length)
        : start_(start), granularity_(g), length_(length) {
        if (length < 0) fail(Errc::config_error, "negative calendar length");
    }

    Timestamp start() const { return start_; }
    Granularity granularity() const { return granularity_; }
    int64_t length() const { return length_; }
    int64_t step_seconds() const { return granularity_seconds(granularity_); }

    /// Time of the last entry. Requires a non-empty calendar.
    Timestamp end() const {
        if (length_ == 0) fail(Errc::out_of_range, "empty calendar has no end");
        return grid_time(length_ - 1);
    }

    /// Grid time of an arbitrary index, including virtual indices outside
    /// [0, n) (used for segment halos and padding).
    Timestamp grid_time(int64_t index) const { return start_.plus(index, granularity_); }

    /// Index of a grid point within [0, n). Throws OffGrid / OutOfRange.
    int64_t index_of(Timestamp t) const {
        int64_t k = grid_index(t);
        if (k < 0 || k >= length_)
            fail(Errc::out_of_range, format_timestamp(t) + " outside calendar range");
        return k;
    }

    /// Signed grid offset from start; may fall outside [0, n). Throws OffGrid.
    int64_t grid_index(Timestamp t) const {
        int64_t delta = t.secs - start_.secs;
        int64_t step = step_seconds();
        if (delta % step != 0)
            fail(Errc::off_grid, format_timestamp(t) + " is not on the " +
                                     granularity_name(granularity_) + " grid");
        return delta / step;
    }

    Timestamp time_at(int64_t index) const {
        if (index < 0 || index >= length_) fail(Errc::out_of_range, "index outside calendar");
        return grid_time(index);
    }

    /// Same start, granularity and length.
    friend bool operator==(const Calendar& a, const Calendar& b) = default;

    /// A calendar with the same grid but a different length.
    Calendar with_length(int64_t n) const { return Calendar(start_, granularity_, n); }

private:
    Timestamp start_{};
    Granularity granularity_ = Granularity::day;
    int64_t length_ = 0;
};

inline void require_same_calendar(const Calendar& a, const Calendar& b) {
    if (!(a == b)) fail(Errc::calendar_mismatch, "operands use different calendars");
}

} // namespace tsgrid
