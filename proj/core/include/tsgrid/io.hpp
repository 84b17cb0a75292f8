#pragma once

#include "tsgrid/series.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tsgrid::io {

/// Namespace URI of the series XML vocabulary. Documents may bind it to any
/// prefix; elements are matched by (URI, local name).
inline constexpr const char* kXmlNamespace = "urn:tsgrid:ts";

/// One data row as read from a file, before grid layout.
struct RawPoint {
    Timestamp t;
    Value v;
};

/// Parses `<document><timeseries><date/><value/></timeseries>*</document>`
/// (all elements in kXmlNamespace). Throws ParseError with a line number.
std::vector<RawPoint> read_xml(std::istream& in);

/// Parses `date,value` rows; a non-date first line is treated as a header.
/// An empty or "!" value field is Empty, "?" is Unknown. Throws ParseError
/// or BadColumnCount with a line number.
std::vector<RawPoint> read_csv(std::istream& in);

/// Lays rows onto a calendar grid. The step is the largest granularity unit
/// dividing every gap between consecutive rows (a single row defaults to
/// days); pass `g` to override. Grid positions without a row become "!".
/// Throws NonMonotoneDates / DuplicateDate on unordered rows.
TimeSeries grid_points(const std::vector<RawPoint>& pts,
                       std::optional<Granularity> g = std::nullopt);

TimeSeries load_xml(const std::string& path, std::optional<Granularity> g = std::nullopt);
TimeSeries load_csv(const std::string& path, std::optional<Granularity> g = std::nullopt);

/// Dispatches on the extension: ".xml" parses as XML, anything else as CSV.
TimeSeries load_series_file(const std::string& path,
                            std::optional<Granularity> g = std::nullopt);

/// Writers emit one row per grid position: Empty becomes an empty value
/// field, Unknown becomes "?", so load(write(s)) reproduces s exactly.
void write_xml(std::ostream& out, const TimeSeries& s);
void write_csv(std::ostream& out, const TimeSeries& s);
void save_series_file(const std::string& path, const TimeSeries& s);

} // namespace tsgrid::io
