#include "tsgrid/value.hpp"

#include <charconv>

namespace tsgrid {

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

std::string value_to_string(Value v) {
    switch (v.kind()) {
    case Value::Kind::empty: return "!";
    case Value::Kind::unknown: return "?";
    case Value::Kind::real: return format_double(v.as_real());
    }
    return "?";
}

} // namespace tsgrid
