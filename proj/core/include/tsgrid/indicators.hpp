#pragma once

#include "tsgrid/algebra.hpp"
#include "tsgrid/series.hpp"

#include <span>

namespace tsgrid {

/// MACD parameterization; the usual signal line is the 9-step moving
/// average of the 12/26 moving-average difference.
struct MacdParams {
    int64_t fast = 12;
    int64_t slow = 26;
    int64_t signal = 9;

    void validate() const {
        if (fast < 1 || slow < 1 || signal < 1 || fast >= slow)
            fail(Errc::bad_params, "MACD needs 1 <= fast < slow and signal >= 1");
    }
};

/// Per-position trading mark derived from a signal line; None where the
/// line is null.
struct Signal {
    enum class Mark : uint8_t { none, buy, sell };
    Calendar calendar;
    std::vector<Mark> marks;
};

/// Moving average over the w items ending at each position. Any "?" in the
/// window dominates, else any "!"; otherwise the plain mean. O(1) per step.
TimeSeries mavg(const TimeSeries& s, int64_t w);

/// Exponentially weighted moving average over a w-item window: item t-i
/// carries weight (1-alpha)^i, normalized by the finite geometric sum.
/// alpha = 0 degenerates to uniform weights, i.e. mavg. Null policy as mavg.
TimeSeries ema(const TimeSeries& s, double alpha, int64_t w);

/// Momentum: V[t] = S[t] - S[t-w], with the series-start duplication rule.
TimeSeries mom(const TimeSeries& s, int64_t w);

/// Pointwise subtraction on a shared calendar.
TimeSeries msub(const TimeSeries& a, const TimeSeries& b);

/// Signal line: mavg(msub(mavg(S, fast), mavg(S, slow)), signal).
TimeSeries macd(const TimeSeries& s, const MacdParams& p = {});

/// Buy where the MACD signal line is positive, Sell where it is a real
/// value <= 0. Equivalent to select(macd(S, p), >0) with non-Empty -> Buy.
Signal buy_signal(const TimeSeries& s, const MacdParams& p = {});

namespace detail {

/// Span kernels shared by the whole-series operators and the per-segment
/// executors. `edge` is the first index that really exists; reads below it
/// follow the policy (duplicate-the-edge at a true series start, "?" inside
/// a segment whose halo is exhausted).
void mavg_span(std::span<const Value> in, int64_t w, size_t edge, EdgePolicy policy,
               std::span<Value> out);
void ema_span(std::span<const Value> in, double alpha, int64_t w, size_t edge, EdgePolicy policy,
              std::span<Value> out);
void mom_span(std::span<const Value> in, int64_t w, size_t edge, EdgePolicy policy,
              std::span<Value> out);

} // namespace detail

} // namespace tsgrid
