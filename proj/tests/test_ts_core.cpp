#include "doctest.h"
#include "helpers.hpp"

#include "tsgrid/series.hpp"

using namespace tsgrid;
using namespace tsgrid::testing;

TEST_SUITE_BEGIN("ts_core");

TEST_CASE("value kinds and normalization") {
    CHECK(Value().is_empty());
    CHECK(Value::real(3.5).is_real());
    CHECK(Value::real(3.5).as_real() == 3.5);
    CHECK(Value::unknown().is_unknown());
    CHECK(Value::empty().is_null());
    CHECK(Value::unknown().is_null());
    CHECK_FALSE(Value::real(0).is_null());

    // Non-finite inputs degrade to "?" instead of storing NaN/Inf.
    CHECK(Value::real(std::nan("")).is_unknown());
    CHECK(Value::real(HUGE_VAL).is_unknown());
    CHECK(Value::real(-HUGE_VAL).is_unknown());
}

TEST_CASE("value equality") {
    CHECK(Value::real(2) == Value::real(2));
    CHECK_FALSE(Value::real(2) == Value::real(3));
    CHECK(Value::empty() == Value::empty());
    CHECK(Value::unknown() == Value::unknown());
    CHECK_FALSE(Value::empty() == Value::unknown());
    CHECK_FALSE(Value::real(0) == Value::empty());
}

TEST_CASE("null addition table") {
    Value r = Value::real(1), e = Value::empty(), u = Value::unknown();
    CHECK(value_add(e, e) == e);
    CHECK(value_add(e, u) == u);
    CHECK(value_add(u, e) == u);
    CHECK(value_add(u, u) == u);
    CHECK(value_add(r, e) == e);
    CHECK(value_add(e, r) == e);
    CHECK(value_add(r, u) == u);
    CHECK(value_add(u, r) == u);
    CHECK(value_add(r, Value::real(2)) == Value::real(3));
}

TEST_CASE("null scaling") {
    CHECK(value_scale(5, Value::empty()) == Value::empty());
    CHECK(value_scale(5, Value::unknown()) == Value::unknown());
    CHECK(value_scale(5, Value::real(2)) == Value::real(10));
    CHECK(value_scale(0, Value::empty()) == Value::empty());
    // overflow degrades to "?"
    CHECK(value_scale(1e300, Value::real(1e300)).is_unknown());
}

TEST_CASE("double formatting is shortest round-trip") {
    CHECK(format_double(0) == "0");
    CHECK(format_double(12) == "12");
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(-3.25) == "-3.25");
    CHECK(format_double(0.1) == "0.1");
    double third = 1.0 / 3.0;
    CHECK(std::strtod(format_double(third).c_str(), nullptr) == third);
    CHECK(value_to_string(Value::empty()) == "!");
    CHECK(value_to_string(Value::unknown()) == "?");
    CHECK(value_to_string(Value::real(2.5)) == "2.5");
}

TEST_CASE("timestamp parse and format round trip") {
    Timestamp t = parse_timestamp("1970-01-01");
    CHECK(t.secs == 0);
    CHECK(parse_timestamp("1970-01-02").secs == 86400);
    CHECK(parse_timestamp("1969-12-31").secs == -86400);
    CHECK(format_timestamp(parse_timestamp("2020-02-29")) == "2020-02-29");
    CHECK(format_timestamp(parse_timestamp("2020-06-01T01:02:03Z")) ==
          "2020-06-01T01:02:03Z");
    CHECK(parse_timestamp("2020-06-01 01:02:03").secs ==
          parse_timestamp("2020-06-01T01:02:03Z").secs);

    CHECK_THROWS_AS(parse_timestamp("2020-13-01"), Error);
    CHECK_THROWS_AS(parse_timestamp("2020-02-30"), Error);
    CHECK_THROWS_AS(parse_timestamp("not a date"), Error);
    CHECK_THROWS_AS(parse_timestamp("2020-06-01T25:00:00"), Error);
}

TEST_CASE("granularities") {
    CHECK(granularity_seconds(Granularity::second) == 1);
    CHECK(granularity_seconds(Granularity::minute) == 60);
    CHECK(granularity_seconds(Granularity::hour) == 3600);
    CHECK(granularity_seconds(Granularity::day) == 86400);
    CHECK(granularity_seconds(Granularity::week) == 604800);
    CHECK(granularity_from_name("day") == Granularity::day);
    CHECK(granularity_name(Granularity::week) == std::string("week"));
    CHECK_THROWS_AS(granularity_from_name("fortnight"), Error);
}

TEST_CASE("calendar index/time bijection") {
    Calendar cal(parse_timestamp("2020-01-01"), Granularity::day, 10);
    CHECK(cal.length() == 10);
    CHECK(cal.step_seconds() == 86400);
    for (int64_t i = 0; i < 10; ++i) CHECK(cal.index_of(cal.time_at(i)) == i);
    CHECK(format_timestamp(cal.end()) == "2020-01-10");

    // off-grid and out-of-range are distinct failures
    CHECK_THROWS_WITH_AS(cal.index_of(parse_timestamp("2020-01-02T12:00:00")),
                         doctest::Contains("grid"), Error);
    CHECK_THROWS_AS(cal.index_of(parse_timestamp("2020-01-11")), Error);
    CHECK_THROWS_AS(cal.index_of(parse_timestamp("2019-12-31")), Error);

    // signed offsets stay usable outside the stored range
    CHECK(cal.grid_index(parse_timestamp("2019-12-30")) == -2);
    CHECK(format_timestamp(cal.grid_time(-2)) == "2019-12-30");
    CHECK(cal.with_length(3).length() == 3);
}

TEST_CASE("calendar equality includes the grid") {
    Calendar a(parse_timestamp("2020-01-01"), Granularity::day, 5);
    Calendar b(parse_timestamp("2020-01-01"), Granularity::hour, 5);
    Calendar c(parse_timestamp("2020-01-02"), Granularity::day, 5);
    CHECK(a == a);
    CHECK_FALSE(a == b);
    CHECK_FALSE(a == c);
    CHECK_THROWS_AS(require_same_calendar(a, b), Error);
}

TEST_CASE("series construction and access") {
    TimeSeries s = series_of("1 ! 3");
    CHECK(s.length() == 3);
    CHECK(s.at(0) == Value::real(1));
    CHECK(s.at(1).is_empty());
    CHECK(format_timestamp(s.item(2).time) == "2020-01-03");

    CHECK_THROWS_AS(TimeSeries(daily(4), std::vector<Value>(3)), Error);
}

TEST_CASE("series slice is inclusive and re-based") {
    TimeSeries s = make_series({0, 1, 2, 3, 4});
    TimeSeries cut = s.slice(parse_timestamp("2020-01-02"), parse_timestamp("2020-01-04"));
    CHECK(cut.length() == 3);
    CHECK(cut.at(0) == Value::real(1));
    CHECK(cut.at(2) == Value::real(3));
    CHECK(format_timestamp(cut.calendar().start()) == "2020-01-02");
    CHECK_THROWS_AS(s.slice(parse_timestamp("2020-01-04"), parse_timestamp("2020-01-02")), Error);
}

TEST_CASE("pointwise add and scale on series") {
    TimeSeries a = series_of("1 2 ! ?");
    TimeSeries b = series_of("10 ! 5 1");
    TimeSeries sum = ts_add(a, b);
    CHECK(sum.at(0) == Value::real(11));
    CHECK(sum.at(1).is_empty());
    CHECK(sum.at(2).is_empty());
    CHECK(sum.at(3).is_unknown());

    TimeSeries scaled = ts_scale(-2, a);
    CHECK(scaled.at(0) == Value::real(-2));
    CHECK(scaled.at(1) == Value::real(-4));
    CHECK(scaled.at(2).is_empty());
    CHECK(scaled.at(3).is_unknown());

    TimeSeries other = make_series({1, 2, 3, 4}, "2021-01-01");
    CHECK_THROWS_AS(ts_add(a, other), Error);
}

TEST_CASE("errors carry their code") {
    try {
        daily(3).index_of(parse_timestamp("2031-01-01"));
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::out_of_range);
        CHECK(std::string(e.what()).find("OutOfRange") != std::string::npos);
    }
}

TEST_SUITE_END();
