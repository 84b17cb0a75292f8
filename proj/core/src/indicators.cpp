#include "tsgrid/indicators.hpp"

#include <algorithm>
#include <cmath>

namespace tsgrid {

namespace detail {

namespace {

// Incremental window state drifts by one rounding error per slide; a direct
// re-summation every block keeps every output within ~1e-12 of the exact
// window aggregate regardless of series length.
constexpr int64_t kRefreshInterval = 4096;

struct NullCounts {
    int64_t unknowns = 0;
    int64_t empties = 0;

    void add(Value v, int dir) {
        if (v.is_unknown()) unknowns += dir;
        else if (v.is_empty()) empties += dir;
    }
    bool any() const { return unknowns > 0 || empties > 0; }
    Value null_value() const { return unknowns > 0 ? Value::unknown() : Value::empty(); }
};

} // namespace

void mavg_span(std::span<const Value> in, int64_t w, size_t edge, EdgePolicy policy,
               std::span<Value> out) {
    check_window(w);
    const int64_t n = static_cast<int64_t>(in.size());
    const int64_t e = static_cast<int64_t>(edge);
    auto x = [&](int64_t q) { return in[static_cast<size_t>(std::max(q, e))]; };

    double sum = 0;
    NullCounts nulls;
    bool primed = false;
    int64_t since_refresh = 0;
    for (int64_t t = 0; t < n; ++t) {
        const int64_t lo = t - w + 1;
        if (policy == EdgePolicy::unknown && lo < e) {
            out[static_cast<size_t>(t)] = Value::unknown();
            primed = false;
            continue;
        }
        if (!primed || since_refresh >= kRefreshInterval) {
            sum = 0;
            nulls = {};
            for (int64_t q = lo; q <= t; ++q) {
                Value v = x(q);
                if (v.is_real()) sum += v.as_real();
                else nulls.add(v, +1);
            }
            primed = true;
            since_refresh = 0;
        } else {
            Value leave = x(lo - 1), enter = x(t);
            if (leave.is_real()) sum -= leave.as_real();
            else nulls.add(leave, -1);
            if (enter.is_real()) sum += enter.as_real();
            else nulls.add(enter, +1);
        }
        ++since_refresh;
        out[static_cast<size_t>(t)] =
            nulls.any() ? nulls.null_value() : Value::real(sum / static_cast<double>(w));
    }
}

void ema_span(std::span<const Value> in, double alpha, int64_t w, size_t edge, EdgePolicy policy,
              std::span<Value> out) {
    check_window(w);
    if (!(alpha >= 0.0 && alpha < 1.0) || !std::isfinite(alpha))
        fail(Errc::bad_alpha, "alpha must lie in [0, 1)");
    const double decay = 1.0 - alpha;
    const double decay_w = std::pow(decay, static_cast<double>(w));
    // Normalizer: sum of (1-alpha)^i for i in [0, w).
    const double norm = alpha == 0.0 ? static_cast<double>(w) : (1.0 - decay_w) / alpha;

    const int64_t n = static_cast<int64_t>(in.size());
    const int64_t e = static_cast<int64_t>(edge);
    auto x = [&](int64_t q) { return in[static_cast<size_t>(std::max(q, e))]; };
    auto real_or_zero = [](Value v) { return v.is_real() ? v.as_real() : 0.0; };

    // weighted = sum over window of (1-alpha)^(t-q) * x(q), null entries
    // contributing zero; the null counters decide whether it is emitted.
    double weighted = 0;
    NullCounts nulls;
    bool primed = false;
    int64_t since_refresh = 0;
    for (int64_t t = 0; t < n; ++t) {
        const int64_t lo = t - w + 1;
        if (policy == EdgePolicy::unknown && lo < e) {
            out[static_cast<size_t>(t)] = Value::unknown();
            primed = false;
            continue;
        }
        if (!primed || since_refresh >= kRefreshInterval) {
            weighted = 0;
            nulls = {};
            for (int64_t q = lo; q <= t; ++q) {
                Value v = x(q);
                nulls.add(v, +1);
                weighted += std::pow(decay, static_cast<double>(t - q)) * real_or_zero(v);
            }
            primed = true;
            since_refresh = 0;
        } else {
            Value leave = x(lo - 1), enter = x(t);
            nulls.add(leave, -1);
            nulls.add(enter, +1);
            weighted = weighted * decay - decay_w * real_or_zero(leave) + real_or_zero(enter);
        }
        ++since_refresh;
        out[static_cast<size_t>(t)] =
            nulls.any() ? nulls.null_value() : Value::real(weighted / norm);
    }
}

void mom_span(std::span<const Value> in, int64_t w, size_t edge, EdgePolicy policy,
              std::span<Value> out) {
    check_window(w);
    const int64_t n = static_cast<int64_t>(in.size());
    const int64_t e = static_cast<int64_t>(edge);
    auto x = [&](int64_t q) { return in[static_cast<size_t>(std::max(q, e))]; };
    for (int64_t t = 0; t < n; ++t) {
        if (policy == EdgePolicy::unknown && t - w < e) {
            out[static_cast<size_t>(t)] = Value::unknown();
            continue;
        }
        out[static_cast<size_t>(t)] = value_add(x(t), value_scale(-1.0, x(t - w)));
    }
}

} // namespace detail

TimeSeries mavg(const TimeSeries& s, int64_t w) {
    std::vector<Value> out(s.values().size());
    detail::mavg_span(s.values(), w, 0, detail::EdgePolicy::clamp, out);
    return TimeSeries(s.calendar(), std::move(out));
}

TimeSeries ema(const TimeSeries& s, double alpha, int64_t w) {
    std::vector<Value> out(s.values().size());
    detail::ema_span(s.values(), alpha, w, 0, detail::EdgePolicy::clamp, out);
    return TimeSeries(s.calendar(), std::move(out));
}

TimeSeries mom(const TimeSeries& s, int64_t w) {
    std::vector<Value> out(s.values().size());
    detail::mom_span(s.values(), w, 0, detail::EdgePolicy::clamp, out);
    return TimeSeries(s.calendar(), std::move(out));
}

TimeSeries msub(const TimeSeries& a, const TimeSeries& b) {
    require_same_calendar(a.calendar(), b.calendar());
    std::vector<Value> out;
    out.reserve(a.values().size());
    for (size_t i = 0; i < a.values().size(); ++i)
        out.push_back(value_add(a.values()[i], value_scale(-1.0, b.values()[i])));
    return TimeSeries(a.calendar(), std::move(out));
}

TimeSeries macd(const TimeSeries& s, const MacdParams& p) {
    p.validate();
    return mavg(msub(mavg(s, p.fast), mavg(s, p.slow)), p.signal);
}

Signal buy_signal(const TimeSeries& s, const MacdParams& p) {
    TimeSeries line = macd(s, p);
    Signal sig;
    sig.calendar = line.calendar();
    sig.marks.reserve(line.values().size());
    for (Value v : line.values()) {
        if (!v.is_real()) sig.marks.push_back(Signal::Mark::none);
        else sig.marks.push_back(v.as_real() > 0 ? Signal::Mark::buy : Signal::Mark::sell);
    }
    return sig;
}

} // namespace tsgrid
