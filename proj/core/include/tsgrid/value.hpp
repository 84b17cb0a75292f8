#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>

namespace tsgrid {

/// A single time-series entry: a finite real, the empty null "!" (no value
/// exists at this time) or the unknown null "?" (a value exists but is not
/// known; also used for padding).
///
/// Non-finite reals are never stored: constructing from NaN or +/-Inf yields
/// Unknown, so arithmetic that overflows degrades to "?" instead of
/// poisoning later computations with NaN.
class Value {
public:
    enum class Kind : uint8_t { real, empty, unknown };

    constexpr Value() : v_(0.0), kind_(Kind::empty) {}

    static Value real(double v) {
        Value out;
        if (std::isfinite(v)) {
            out.v_ = v;
            out.kind_ = Kind::real;
        } else {
            out.kind_ = Kind::unknown;
        }
        return out;
    }
    static constexpr Value empty() { return Value(); }
    static constexpr Value unknown() {
        Value out;
        out.kind_ = Kind::unknown;
        return out;
    }

    Kind kind() const { return kind_; }
    bool is_real() const { return kind_ == Kind::real; }
    bool is_empty() const { return kind_ == Kind::empty; }
    bool is_unknown() const { return kind_ == Kind::unknown; }
    bool is_null() const { return kind_ != Kind::real; }

    double as_real() const {
        assert(kind_ == Kind::real);
        return v_;
    }

    friend bool operator==(const Value& a, const Value& b) {
        if (a.kind_ != b.kind_) return false;
        return a.kind_ != Kind::real || a.v_ == b.v_;
    }

private:
    double v_;
    Kind kind_;
};

/// Addition over values. Null cases: ! + ! = !, ! + ? = ?, ? + ? = ?.
/// Mixed real/null additions absorb the null: r + ! = !, r + ? = ?.
inline Value value_add(Value a, Value b) {
    if (a.is_unknown() || b.is_unknown()) return Value::unknown();
    if (a.is_empty() || b.is_empty()) return Value::empty();
    return Value::real(a.as_real() + b.as_real());
}

/// Scalar multiplication: s * ! = !, s * ? = ?.
inline Value value_scale(double s, Value a) {
    if (!a.is_real()) return a;
    return Value::real(s * a.as_real());
}

/// Shortest round-trip decimal form of a double (byte-stable across runs).
std::string format_double(double v);

/// "!" / "?" / shortest decimal (for diagnostics and text formats).
std::string value_to_string(Value v);

} // namespace tsgrid
