#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tsgrid {

/// Grid step of a calendar.
enum class Granularity : uint8_t { second, minute, hour, day, week };

int64_t granularity_seconds(Granularity g);
const char* granularity_name(Granularity g);
Granularity granularity_from_name(std::string_view name); // throws ConfigError

/// A point in time, UTC, second precision. Wraps seconds since the Unix
/// epoch; proleptic Gregorian for dates before 1970.
struct Timestamp {
    int64_t secs = 0;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

    Timestamp plus(int64_t steps, Granularity g) const {
        return Timestamp{secs + steps * granularity_seconds(g)};
    }
};

/// Parses "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS" (optional trailing 'Z').
/// Throws ParseError on malformed input.
Timestamp parse_timestamp(std::string_view text);

/// Formats as a date when the time-of-day is midnight, otherwise as a full
/// "YYYY-MM-DDTHH:MM:SSZ" timestamp. parse_timestamp round-trips both.
std::string format_timestamp(Timestamp t);

} // namespace tsgrid
