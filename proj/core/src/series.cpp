#include "tsgrid/series.hpp"

namespace tsgrid {

TimeSeries ts_add(const TimeSeries& a, const TimeSeries& b) {
    require_same_calendar(a.calendar(), b.calendar());
    std::vector<Value> out;
    out.reserve(a.values().size());
    for (size_t i = 0; i < a.values().size(); ++i)
        out.push_back(value_add(a.values()[i], b.values()[i]));
    return TimeSeries(a.calendar(), std::move(out));
}

TimeSeries ts_scale(double s, const TimeSeries& series) {
    std::vector<Value> out;
    out.reserve(series.values().size());
    for (Value v : series.values()) out.push_back(value_scale(s, v));
    return TimeSeries(series.calendar(), std::move(out));
}

} // namespace tsgrid
