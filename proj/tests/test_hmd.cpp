#include <doctest.h>

#include <sstream>

#include "sfm/csv.hpp"
#include "sfm/hmd.hpp"

using namespace sfm;

namespace {

const char* kTwoRecord =
    "Synthetic, Deaths (period 1x1)\n"
    "\n"
    "  Year          Age             Female            Male           Total\n"
    "  1950           20             10.0              30.0           40.0\n"
    "  1950           21             11.0              29.0           40.0\n";

} // namespace

TEST_CASE("two-record file, male column") {
    std::istringstream in(kTwoRecord);
    const HmdTable t = parse_hmd_table(in, HmdColumn::Male);
    CHECK(t.find(1950, 20)->value == 30.0);
    CHECK(t.find(1950, 21)->value == 29.0);
    CHECK(t.year_min == 1950);
    CHECK(t.age_min == 20);
    CHECK(t.age_max == 21);
}

TEST_CASE("110+ maps to age 110 and '.' to missing") {
    std::istringstream in(
        "header\n\n"
        "1950 109 1.0 2.0 3.0\n"
        "1950 110+ 4.0 . 6.0\n");
    const HmdTable t = parse_hmd_table(in, HmdColumn::Male);
    CHECK(t.find(1950, 110) != nullptr);
    CHECK(t.find(1950, 110)->missing);
    CHECK(t.find(1950, 109)->value == 2.0);
}

TEST_CASE("parse errors carry line numbers") {
    std::istringstream bad_fields("h\n\n1950 20 1.0 2.0\n");
    CHECK_THROWS_WITH_AS(parse_hmd_table(bad_fields, HmdColumn::Total),
                         doctest::Contains("line 3"), data_error);

    std::istringstream bad_number("h\n\n1950 20 1.0 x2 3.0\n");
    CHECK_THROWS_WITH_AS(parse_hmd_table(bad_number, HmdColumn::Total),
                         doctest::Contains("line 3"), data_error);

    std::istringstream gap_age("h\n\n1950 20 1 1 1\n1950 22 1 1 1\n");
    CHECK_THROWS_WITH_AS(parse_hmd_table(gap_age, HmdColumn::Total),
                         doctest::Contains("non-contiguous"), data_error);

    std::istringstream gap_year("h\n\n1950 20 1 1 1\n1952 20 1 1 1\n");
    CHECK_THROWS_WITH_AS(parse_hmd_table(gap_year, HmdColumn::Total),
                         doctest::Contains("non-contiguous"), data_error);
}

TEST_CASE("build_surface assembles a dense window") {
    std::istringstream deaths(kTwoRecord);
    std::istringstream exposures(
        "Synthetic, Exposure to risk (period 1x1)\n\n"
        "1950 20 500 1000 1500\n"
        "1950 21 480 990 1470\n");
    const HmdTable dt = parse_hmd_table(deaths, HmdColumn::Male);
    const HmdTable et = parse_hmd_table(exposures, HmdColumn::Male);
    const MortalitySurface s = build_surface(dt, et, LexisWindow(1950, 1950, 20, 21));
    CHECK(s.deaths(0, 0) == 30.0);
    CHECK(s.exposures(0, 1) == 990.0);
}

TEST_CASE("build_surface rejects gaps, missing values, inconsistency") {
    std::istringstream deaths(kTwoRecord);
    const HmdTable dt = parse_hmd_table(deaths, HmdColumn::Male);

    // coverage gap: exposures only cover age 20
    std::istringstream exp1("h\n\n1950 20 500 1000 1500\n");
    const HmdTable et1 = parse_hmd_table(exp1, HmdColumn::Male);
    CHECK_THROWS_WITH_AS(build_surface(dt, et1, LexisWindow(1950, 1950, 20, 21)),
                         doctest::Contains("(1950, 21)"), data_error);

    // missing marker inside the window
    std::istringstream exp2("h\n\n1950 20 500 1000 1500\n1950 21 480 . 1470\n");
    const HmdTable et2 = parse_hmd_table(exp2, HmdColumn::Male);
    CHECK_THROWS_WITH_AS(build_surface(dt, et2, LexisWindow(1950, 1950, 20, 21)),
                         doctest::Contains("missing"), data_error);

    // deaths with zero exposure
    std::istringstream exp3("h\n\n1950 20 500 1000 1500\n1950 21 480 0 1470\n");
    const HmdTable et3 = parse_hmd_table(exp3, HmdColumn::Male);
    CHECK_THROWS_WITH_AS(build_surface(dt, et3, LexisWindow(1950, 1950, 20, 21)),
                         doctest::Contains("(1950, 21)"), data_error);
}

TEST_CASE("hmd write/parse and grid CSV round-trip to the ulp") {
    LexisWindow w(1980, 1982, 108, 110);
    Grid values(3, 3);
    values << 0.1234567890123456, 1.0 / 3.0, 2e-17, 0.7071067811865476, 123456.789, 1e-300,
        3.141592653589793, 0.9999999999999999, 42.0;

    std::ostringstream hmd;
    write_hmd_table(hmd, w, values, "Synthetic");
    std::istringstream back(hmd.str());
    const HmdTable t = parse_hmd_table(back, HmdColumn::Total);
    for (int tt = w.t_min; tt <= w.t_max; ++tt)
        for (int x = w.x_min; x <= w.x_max; ++x)
            CHECK(t.find(tt, x)->value == values(w.row(tt), w.col(x)));

    std::ostringstream csv;
    write_grid_csv(csv, w, values, "value");
    std::istringstream csv_in(csv.str());
    const GridCsv g = read_grid_csv(csv_in);
    CHECK(g.window == w);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(g.values(r, c) == values(r, c));
}
