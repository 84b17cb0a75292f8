#include "tsgrid/time.hpp"

#include "tsgrid/errors.hpp"

#include <charconv>
#include <cstdio>

namespace tsgrid {

int64_t granularity_seconds(Granularity g) {
    switch (g) {
    case Granularity::second: return 1;
    case Granularity::minute: return 60;
    case Granularity::hour: return 3600;
    case Granularity::day: return 86400;
    case Granularity::week: return 604800;
    }
    return 1;
}

const char* granularity_name(Granularity g) {
    switch (g) {
    case Granularity::second: return "second";
    case Granularity::minute: return "minute";
    case Granularity::hour: return "hour";
    case Granularity::day: return "day";
    case Granularity::week: return "week";
    }
    return "second";
}

Granularity granularity_from_name(std::string_view name) {
    if (name == "second") return Granularity::second;
    if (name == "minute") return Granularity::minute;
    if (name == "hour") return Granularity::hour;
    if (name == "day") return Granularity::day;
    if (name == "week") return Granularity::week;
    fail(Errc::config_error, "unknown granularity '" + std::string(name) + "'");
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

unsigned days_in_month(int64_t y, unsigned m) {
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2) {
        bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        return leap ? 29 : 28;
    }
    return lengths[m - 1];
}

int64_t parse_fixed_int(std::string_view s, size_t pos, size_t len, const char* what) {
    if (pos + len > s.size()) fail(Errc::parse_error, std::string("truncated ") + what);
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc() || p != s.data() + pos + len)
        fail(Errc::parse_error, std::string("bad ") + what + " in timestamp");
    return v;
}

} // namespace

Timestamp parse_timestamp(std::string_view text) {
    // YYYY-MM-DD with optional THH:MM:SS and optional Z.
    if (text.size() < 10 || text[4] != '-' || text[7] != '-')
        fail(Errc::parse_error, "timestamp '" + std::string(text) + "' is not ISO-8601");
    int64_t y = parse_fixed_int(text, 0, 4, "year");
    int64_t mo = parse_fixed_int(text, 5, 2, "month");
    int64_t d = parse_fixed_int(text, 8, 2, "day");
    if (mo < 1 || mo > 12) fail(Errc::parse_error, "month out of range in '" + std::string(text) + "'");
    if (d < 1 || d > days_in_month(y, static_cast<unsigned>(mo)))
        fail(Errc::parse_error, "day out of range in '" + std::string(text) + "'");
    int64_t h = 0, mi = 0, se = 0;
    size_t rest = 10;
    if (text.size() > 10) {
        if (text[10] != 'T' && text[10] != ' ')
            fail(Errc::parse_error, "expected 'T' in '" + std::string(text) + "'");
        if (text.size() < 19 || text[13] != ':' || text[16] != ':')
            fail(Errc::parse_error, "bad time of day in '" + std::string(text) + "'");
        h = parse_fixed_int(text, 11, 2, "hour");
        mi = parse_fixed_int(text, 14, 2, "minute");
        se = parse_fixed_int(text, 17, 2, "second");
        if (h > 23 || mi > 59 || se > 60)
            fail(Errc::parse_error, "time of day out of range in '" + std::string(text) + "'");
        rest = 19;
    }
    if (rest < text.size() && !(rest + 1 == text.size() && text[rest] == 'Z'))
        fail(Errc::parse_error, "trailing characters in '" + std::string(text) + "'");
    int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
    return Timestamp{days * 86400 + h * 3600 + mi * 60 + se};
}

std::string format_timestamp(Timestamp t) {
    int64_t days = t.secs / 86400;
    int64_t sod = t.secs % 86400;
    if (sod < 0) {
        sod += 86400;
        days -= 1;
    }
    int64_t y;
    unsigned mo, d;
    civil_from_days(days, y, mo, d);
    char buf[40];
    if (sod == 0) {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), mo, d);
    } else {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                      static_cast<long long>(y), mo, d, static_cast<long long>(sod / 3600),
                      static_cast<long long>((sod % 3600) / 60), static_cast<long long>(sod % 60));
    }
    return buf;
}

} // namespace tsgrid
