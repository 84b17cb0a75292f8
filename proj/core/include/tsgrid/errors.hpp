#pragma once

#include <stdexcept>
#include <string>

namespace tsgrid {

/// Error categories surfaced by the library. Each maps 1:1 to a failure
/// mode of a public operation; CLI exit diagnostics print the enum name.
enum class Errc {
    calendar_mismatch,
    off_grid,
    out_of_range,
    bad_window,
    bad_alpha,
    bad_params,
    empty_join,
    syntax_error,
    unknown_operator,
    arity_error,
    unknown_series,
    duplicate_series,
    gap_error,
    spec_mismatch,
    halo_too_small,
    ring_empty,
    parse_error,
    non_monotone_dates,
    duplicate_date,
    bad_column_count,
    config_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace tsgrid
