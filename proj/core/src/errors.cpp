#include "tsgrid/errors.hpp"

namespace tsgrid {

const char* errc_name(Errc c) {
    switch (c) {
    case Errc::calendar_mismatch: return "CalendarMismatch";
    case Errc::off_grid: return "OffGrid";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::bad_window: return "BadWindow";
    case Errc::bad_alpha: return "BadAlpha";
    case Errc::bad_params: return "BadParams";
    case Errc::empty_join: return "EmptyJoin";
    case Errc::syntax_error: return "SyntaxError";
    case Errc::unknown_operator: return "UnknownOperator";
    case Errc::arity_error: return "ArityError";
    case Errc::unknown_series: return "UnknownSeries";
    case Errc::duplicate_series: return "DuplicateSeries";
    case Errc::gap_error: return "GapError";
    case Errc::spec_mismatch: return "SpecMismatch";
    case Errc::halo_too_small: return "HaloTooSmall";
    case Errc::ring_empty: return "RingEmpty";
    case Errc::parse_error: return "ParseError";
    case Errc::non_monotone_dates: return "NonMonotoneDates";
    case Errc::duplicate_date: return "DuplicateDate";
    case Errc::bad_column_count: return "BadColumnCount";
    case Errc::config_error: return "ConfigError";
    }
    return "Error";
}

} // namespace tsgrid
