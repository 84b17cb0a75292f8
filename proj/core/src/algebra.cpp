#include "tsgrid/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace tsgrid {

namespace {

const char* cmp_symbol(Predicate::Cmp c) {
    switch (c) {
    case Predicate::Cmp::gt: return ">";
    case Predicate::Cmp::lt: return "<";
    case Predicate::Cmp::ge: return ">=";
    case Predicate::Cmp::le: return "<=";
    case Predicate::Cmp::eq: return "=";
    }
    return "?";
}

bool cmp_apply(Predicate::Cmp c, double v, double threshold) {
    switch (c) {
    case Predicate::Cmp::gt: return v > threshold;
    case Predicate::Cmp::lt: return v < threshold;
    case Predicate::Cmp::ge: return v >= threshold;
    case Predicate::Cmp::le: return v <= threshold;
    case Predicate::Cmp::eq: return v == threshold;
    }
    return false;
}

// Fold with the null precedence used throughout: any "?" dominates, then
// any "!", else the real fold.
template <class Fold>
Value fold_reals(std::span<const Value> args, Fold fold) {
    bool any_empty = false;
    for (Value v : args) {
        if (v.is_unknown()) return Value::unknown();
        if (v.is_empty()) any_empty = true;
    }
    if (any_empty) return Value::empty();
    double acc = args[0].as_real();
    for (size_t i = 1; i < args.size(); ++i) acc = fold(acc, args[i].as_real());
    return Value::real(acc);
}

std::map<std::string, MapFn> make_map_catalog() {
    std::map<std::string, MapFn> cat;
    cat["SUM"] = {"SUM", -1, [](std::span<const Value> a) {
                      Value acc = a[0];
                      for (size_t i = 1; i < a.size(); ++i) acc = value_add(acc, a[i]);
                      return acc;
                  }};
    cat["SUB"] = {"SUB", 2, [](std::span<const Value> a) {
                      return value_add(a[0], value_scale(-1.0, a[1]));
                  }};
    cat["MUL"] = {"MUL", -1, [](std::span<const Value> a) {
                      return fold_reals(a, [](double x, double y) { return x * y; });
                  }};
    cat["MIN"] = {"MIN", -1, [](std::span<const Value> a) {
                      return fold_reals(a, [](double x, double y) { return std::min(x, y); });
                  }};
    cat["MAX"] = {"MAX", -1, [](std::span<const Value> a) {
                      return fold_reals(a, [](double x, double y) { return std::max(x, y); });
                  }};
    cat["ABS"] = {"ABS", 1, [](std::span<const Value> a) {
                      return a[0].is_real() ? Value::real(std::fabs(a[0].as_real())) : a[0];
                  }};
    cat["ID"] = {"ID", 1, [](std::span<const Value> a) { return a[0]; }};
    return cat;
}

std::map<std::string, WindowFn> make_window_catalog() {
    std::map<std::string, WindowFn> cat;
    auto values_only = [](auto fold) {
        return [fold](std::span<const Item> items) {
            bool any_empty = false;
            for (const Item& it : items) {
                if (it.value.is_unknown()) return Value::unknown();
                if (it.value.is_empty()) any_empty = true;
            }
            if (any_empty) return Value::empty();
            double acc = items[0].value.as_real();
            for (size_t i = 1; i < items.size(); ++i) acc = fold(acc, items[i].value.as_real(), i);
            return Value::real(acc);
        };
    };
    cat["AVG"] = {"AVG", values_only([](double acc, double v, size_t i) {
                      // running mean, final value equals sum/w
                      return acc + (v - acc) / static_cast<double>(i + 1);
                  })};
    cat["SUM"] = {"SUM", values_only([](double acc, double v, size_t) { return acc + v; })};
    cat["MIN"] = {"MIN", values_only([](double acc, double v, size_t) { return std::min(acc, v); })};
    cat["MAX"] = {"MAX", values_only([](double acc, double v, size_t) { return std::max(acc, v); })};
    return cat;
}

} // namespace

Predicate Predicate::compare(Cmp cmp, double threshold) {
    Predicate p;
    p.text = std::string(cmp_symbol(cmp)) + format_double(threshold);
    p.fn = [cmp, threshold](Value v) { return v.is_real() && cmp_apply(cmp, v.as_real(), threshold); };
    return p;
}

Predicate Predicate::always_true() {
    return Predicate{"true", [](Value) { return true; }};
}

const MapFn& map_fn(const std::string& name) {
    static const std::map<std::string, MapFn> catalog = make_map_catalog();
    auto it = catalog.find(name);
    if (it == catalog.end()) fail(Errc::unknown_operator, "no map function '" + name + "'");
    return it->second;
}

bool is_commutative_map(const std::string& name) {
    return name == "SUM" || name == "MIN" || name == "MAX" || name == "MUL";
}

const WindowFn& window_fn(const std::string& name) {
    static const std::map<std::string, WindowFn> catalog = make_window_catalog();
    auto it = catalog.find(name);
    if (it == catalog.end()) fail(Errc::unknown_operator, "no window function '" + name + "'");
    return it->second;
}

TimeSeries select(const TimeSeries& s, const Predicate& pred) {
    std::vector<Value> out;
    out.reserve(s.values().size());
    for (Value v : s.values()) out.push_back(pred.fn(v) ? v : Value::empty());
    return TimeSeries(s.calendar(), std::move(out));
}

TimeSeries project(const TimeSeries& s, const MapFn& fun) {
    if (fun.arity != 1 && fun.arity >= 0)
        fail(Errc::arity_error, "project needs a unary map, got " + fun.name);
    std::vector<Value> out;
    out.reserve(s.values().size());
    for (Value v : s.values()) out.push_back(fun.apply({&v, 1}));
    return TimeSeries(s.calendar(), std::move(out));
}

TimeSeries unite(const TimeSeries& a, const TimeSeries& b) {
    require_same_calendar(a.calendar(), b.calendar());
    std::vector<Value> out;
    out.reserve(a.values().size());
    for (size_t i = 0; i < a.values().size(); ++i) {
        Value va = a.values()[i], vb = b.values()[i];
        if (va == vb) out.push_back(va);
        else if (va.is_empty()) out.push_back(vb);
        else if (vb.is_empty()) out.push_back(va);
        else out.push_back(Value::unknown());
    }
    return TimeSeries(a.calendar(), std::move(out));
}

TimeSeries intersect(const TimeSeries& a, const TimeSeries& b) {
    require_same_calendar(a.calendar(), b.calendar());
    std::vector<Value> out;
    out.reserve(a.values().size());
    for (size_t i = 0; i < a.values().size(); ++i) {
        Value va = a.values()[i];
        out.push_back(va == b.values()[i] && !va.is_empty() ? va : Value::empty());
    }
    return TimeSeries(a.calendar(), std::move(out));
}

TimeSeries join(std::span<const TimeSeries> series, const MapFn& fun) {
    if (series.empty()) fail(Errc::empty_join, "join needs at least one series");
    if (fun.arity >= 0 && fun.arity != static_cast<int>(series.size()))
        fail(Errc::arity_error, fun.name + " takes " + std::to_string(fun.arity) + " values, got " +
                                    std::to_string(series.size()));
    const Calendar& cal = series[0].calendar();
    for (const TimeSeries& s : series) require_same_calendar(cal, s.calendar());
    std::vector<Value> out;
    out.reserve(static_cast<size_t>(cal.length()));
    std::vector<Value> row(series.size());
    for (int64_t t = 0; t < cal.length(); ++t) {
        for (size_t k = 0; k < series.size(); ++k) row[k] = series[k].at(t);
        out.push_back(fun.apply(row));
    }
    return TimeSeries(cal, std::move(out));
}

namespace detail {

void check_window(int64_t w) {
    if (w < 1 || w > kMaxWindow)
        fail(Errc::bad_window, "window size " + std::to_string(w) + " outside [1, " +
                                   std::to_string(kMaxWindow) + "]");
}

void window_span(std::span<const Value> in, Timestamp in_start, Granularity g, int64_t w,
                 const WindowFn& fun, size_t edge, EdgePolicy policy, std::span<Value> out) {
    check_window(w);
    const int64_t n = static_cast<int64_t>(in.size());
    const int64_t e = static_cast<int64_t>(edge);
    std::vector<Item> buf(static_cast<size_t>(w));
    for (int64_t t = 0; t < n; ++t) {
        int64_t lo = t - w + 1;
        if (lo < e && policy == EdgePolicy::unknown) {
            out[static_cast<size_t>(t)] = Value::unknown();
            continue;
        }
        for (int64_t i = 0; i < w; ++i) {
            int64_t src = std::max(lo + i, e);
            buf[static_cast<size_t>(i)] = {in_start.plus(lo + i, g), in[static_cast<size_t>(src)]};
        }
        out[static_cast<size_t>(t)] = fun.fn(buf);
    }
}

} // namespace detail

TimeSeries window(const TimeSeries& s, int64_t w, const WindowFn& fun) {
    detail::check_window(w);
    std::vector<Value> out(s.values().size());
    detail::window_span(s.values(), s.calendar().start(), s.calendar().granularity(), w, fun, 0,
                        detail::EdgePolicy::clamp, out);
    return TimeSeries(s.calendar(), std::move(out));
}

} // namespace tsgrid
