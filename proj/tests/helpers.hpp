#pragma once

#include "tsgrid/series.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

namespace tsgrid::testing {

// Relative/absolute hybrid used by every numeric check in the suite.
inline bool approx(double a, double b, double tol = 1e-9) {
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline bool value_approx(Value a, Value b, double tol = 1e-9) {
    if (a.kind() != b.kind()) return false;
    return !a.is_real() || approx(a.as_real(), b.as_real(), tol);
}

inline Calendar daily(int64_t n, const std::string& start = "2020-01-01") {
    return Calendar(parse_timestamp(start), Granularity::day, n);
}

inline TimeSeries make_series(const std::vector<double>& reals,
                              const std::string& start = "2020-01-01") {
    std::vector<Value> vals;
    vals.reserve(reals.size());
    for (double r : reals) vals.push_back(Value::real(r));
    return TimeSeries(daily(static_cast<int64_t>(reals.size()), start), std::move(vals));
}

// Compact literal form: space-separated tokens, "!" and "?" for the nulls.
inline TimeSeries series_of(const std::string& tokens,
                            const std::string& start = "2020-01-01") {
    std::vector<Value> vals;
    size_t i = 0;
    while (i < tokens.size()) {
        while (i < tokens.size() && tokens[i] == ' ') ++i;
        if (i >= tokens.size()) break;
        size_t j = tokens.find(' ', i);
        if (j == std::string::npos) j = tokens.size();
        std::string tok = tokens.substr(i, j - i);
        if (tok == "!") vals.push_back(Value::empty());
        else if (tok == "?") vals.push_back(Value::unknown());
        else vals.push_back(Value::real(std::strtod(tok.c_str(), nullptr)));
        i = j;
    }
    int64_t n = static_cast<int64_t>(vals.size());
    return TimeSeries(daily(n, start), std::move(vals));
}

inline bool series_approx(const TimeSeries& a, const TimeSeries& b, double tol = 1e-9) {
    if (!(a.calendar() == b.calendar())) return false;
    for (int64_t i = 0; i < a.length(); ++i)
        if (!value_approx(a.at(i), b.at(i), tol)) return false;
    return true;
}

// Index of the first position where two series disagree, or -1. Handy in
// failure messages.
inline int64_t first_mismatch(const TimeSeries& a, const TimeSeries& b, double tol = 1e-9) {
    if (!(a.calendar() == b.calendar())) return -2;
    for (int64_t i = 0; i < a.length(); ++i)
        if (!value_approx(a.at(i), b.at(i), tol)) return i;
    return -1;
}

// Deterministic random series: mostly a bounded random walk, with a given
// fraction of each null kind scattered in.
inline TimeSeries random_series(std::mt19937_64& rng, int64_t n,
                                double empty_frac = 0.05, double unknown_frac = 0.05) {
    std::uniform_real_distribution<double> step(-1.0, 1.0);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    std::vector<Value> vals;
    vals.reserve(static_cast<size_t>(n));
    double level = 100.0;
    for (int64_t i = 0; i < n; ++i) {
        level += step(rng);
        double p = pick(rng);
        if (p < empty_frac) vals.push_back(Value::empty());
        else if (p < empty_frac + unknown_frac) vals.push_back(Value::unknown());
        else vals.push_back(Value::real(level));
    }
    return TimeSeries(daily(n), std::move(vals));
}

// ---------------------------------------------------------------------------
// Naive oracles: per-position loops with no incremental state. Slow and
// obviously correct; the production kernels are checked against these.

inline Value oracle_window_value(const TimeSeries& s, int64_t t, int64_t w,
                                 const std::vector<double>& weights) {
    bool any_empty = false;
    double sum = 0;
    for (int64_t k = 0; k < w; ++k) {
        int64_t q = std::max<int64_t>(t - w + 1 + k, 0);
        Value v = s.at(q);
        if (v.is_unknown()) return Value::unknown();
        if (v.is_empty()) any_empty = true;
        else sum += weights[static_cast<size_t>(w - 1 - k)] * v.as_real();
    }
    if (any_empty) return Value::empty();
    return Value::real(sum);
}

inline TimeSeries oracle_mavg(const TimeSeries& s, int64_t w) {
    std::vector<double> weights(static_cast<size_t>(w), 1.0 / static_cast<double>(w));
    std::vector<Value> out;
    out.reserve(s.values().size());
    for (int64_t t = 0; t < s.length(); ++t)
        out.push_back(oracle_window_value(s, t, w, weights));
    return TimeSeries(s.calendar(), std::move(out));
}

inline TimeSeries oracle_ema(const TimeSeries& s, double alpha, int64_t w) {
    // weight of the item i steps back: (1-alpha)^i / sum_j (1-alpha)^j
    std::vector<double> weights(static_cast<size_t>(w));
    double norm = 0;
    for (int64_t i = 0; i < w; ++i) {
        weights[static_cast<size_t>(i)] = std::pow(1.0 - alpha, static_cast<double>(i));
        norm += weights[static_cast<size_t>(i)];
    }
    for (double& x : weights) x /= norm;
    std::vector<Value> out;
    out.reserve(s.values().size());
    for (int64_t t = 0; t < s.length(); ++t)
        out.push_back(oracle_window_value(s, t, w, weights));
    return TimeSeries(s.calendar(), std::move(out));
}

inline TimeSeries oracle_mom(const TimeSeries& s, int64_t w) {
    std::vector<Value> out;
    out.reserve(s.values().size());
    for (int64_t t = 0; t < s.length(); ++t) {
        Value now = s.at(t);
        Value before = s.at(std::max<int64_t>(t - w, 0));
        if (now.is_unknown() || before.is_unknown()) out.push_back(Value::unknown());
        else if (now.is_empty() || before.is_empty()) out.push_back(Value::empty());
        else out.push_back(Value::real(now.as_real() - before.as_real()));
    }
    return TimeSeries(s.calendar(), std::move(out));
}

} // namespace tsgrid::testing
