#pragma once

#include "tsgrid/series.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tsgrid {

/// Hard cap on window sizes; anything beyond it is a configuration mistake.
inline constexpr int64_t kMaxWindow = 1 << 20;

/// Total predicate over values plus its canonical text (e.g. ">0").
/// Comparison predicates are false on both nulls.
struct Predicate {
    std::string text;
    std::function<bool(Value)> fn;

    enum class Cmp : uint8_t { gt, lt, ge, le, eq };

    static Predicate compare(Cmp cmp, double threshold);
    static Predicate always_true();
};

/// Named total map over value tuples. arity < 0 means variadic.
struct MapFn {
    std::string name;
    int arity = 1;
    std::function<Value(std::span<const Value>)> fn;

    Value apply(std::span<const Value> args) const { return fn(args); }
};

/// Built-in map catalog: SUM, SUB, MUL, MIN, MAX, ABS, ID.
/// These are the only maps with stable names usable in join expressions.
const MapFn& map_fn(const std::string& name); // throws UnknownOperator
bool is_commutative_map(const std::string& name);

/// Named total function over the w items of a window, oldest item first.
struct WindowFn {
    std::string name;
    std::function<Value(std::span<const Item>)> fn;
};

/// Built-in window catalog: AVG, SUM, MIN, MAX.
const WindowFn& window_fn(const std::string& name); // throws UnknownOperator

/// Positions whose value satisfies pred keep it; all others become "!".
TimeSeries select(const TimeSeries& s, const Predicate& pred);

/// Applies a unary map to every position.
TimeSeries project(const TimeSeries& s, const MapFn& fun);

/// Outer-union adaptation: equal values or the one non-Empty side win;
/// two distinct non-Empty values collapse to "?" (conflicting information).
TimeSeries unite(const TimeSeries& a, const TimeSeries& b);

/// Positions where both series hold the same non-Empty value; "!" elsewhere.
TimeSeries intersect(const TimeSeries& a, const TimeSeries& b);

/// k-ary join on the shared calendar: position t holds fun(S1[t], ..., Sk[t]).
TimeSeries join(std::span<const TimeSeries> series, const MapFn& fun);

/// Sliding-window operator: position t holds fun over the w items ending at
/// and including t. Items before the series start are replaced by item 0.
TimeSeries window(const TimeSeries& s, int64_t w, const WindowFn& fun);

namespace detail {

/// Shared window driver for spans. Windows that would read an index below
/// `edge` either duplicate the item at `edge` (clamp, the series-start rule)
/// or produce "?" (segment interiors, where the halo is the only context).
enum class EdgePolicy : uint8_t { clamp, unknown };

void window_span(std::span<const Value> in, Timestamp in_start, Granularity g, int64_t w,
                 const WindowFn& fun, size_t edge, EdgePolicy policy, std::span<Value> out);

void check_window(int64_t w);

} // namespace detail

} // namespace tsgrid
