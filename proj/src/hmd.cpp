#include "sfm/hmd.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sfm/csv.hpp"

namespace sfm {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) tokens.push_back(tok);
    return tokens;
}

int parse_int(const std::string& tok, int line_no, const char* what) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw data_error("line " + std::to_string(line_no) + ": cannot parse " + what +
                         " from '" + tok + "'");
    return value;
}

HmdTable::Entry parse_value(const std::string& tok, int line_no) {
    if (tok == ".") return {0.0, true};
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return {v, false};
    } catch (const std::exception&) {
        throw data_error("line " + std::to_string(line_no) + ": cannot parse value from '" +
                         tok + "'");
    }
}

} // namespace

HmdColumn hmd_column_from_name(const std::string& name) {
    if (name == "female" || name == "Female") return HmdColumn::Female;
    if (name == "male" || name == "Male") return HmdColumn::Male;
    if (name == "total" || name == "Total") return HmdColumn::Total;
    throw config_error("unknown sex column '" + name + "' (expected female, male or total)");
}

const HmdTable::Entry* HmdTable::find(int year, int age) const {
    auto it = cells.find({year, age});
    return it == cells.end() ? nullptr : &it->second;
}

HmdTable parse_hmd_table(std::istream& in, HmdColumn column) {
    HmdTable table;
    std::string line;
    int line_no = 0;
    bool past_header = false;

    // Records grouped by year, ages in file order, used for contiguity checks.
    int prev_year = 0, prev_age = 0;
    bool have_prev = false;
    int first_age = 0, last_age = 0;
    bool have_age_range = false;
    int year_start_age = 0;

    auto close_year = [&](int year, int final_age) {
        if (!have_age_range) {
            first_age = year_start_age;
            last_age = final_age;
            have_age_range = true;
        } else if (year_start_age != first_age || final_age != last_age) {
            throw data_error("year " + std::to_string(year) + " covers ages " +
                             std::to_string(year_start_age) + "-" + std::to_string(final_age) +
                             ", expected " + std::to_string(first_age) + "-" +
                             std::to_string(last_age));
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!past_header) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) past_header = true;
            continue;
        }
        auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "Year") continue; // column header row
        if (tokens.size() != 5)
            throw data_error("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(tokens.size()));

        const int year = parse_int(tokens[0], line_no, "year");
        int age;
        if (tokens[1] == "110+") {
            age = 110;
        } else {
            age = parse_int(tokens[1], line_no, "age");
        }

        // All three value columns must parse, even if only one is kept.
        const HmdTable::Entry female = parse_value(tokens[2], line_no);
        const HmdTable::Entry male = parse_value(tokens[3], line_no);
        const HmdTable::Entry total = parse_value(tokens[4], line_no);
        const HmdTable::Entry entry =
            column == HmdColumn::Female ? female : column == HmdColumn::Male ? male : total;

        if (have_prev) {
            if (year == prev_year) {
                if (age != prev_age + 1)
                    throw data_error("line " + std::to_string(line_no) + ": ages non-contiguous (" +
                                     std::to_string(prev_age) + " -> " + std::to_string(age) +
                                     " in year " + std::to_string(year) + ")");
            } else {
                if (year != prev_year + 1)
                    throw data_error("line " + std::to_string(line_no) + ": years non-contiguous (" +
                                     std::to_string(prev_year) + " -> " + std::to_string(year) + ")");
                close_year(prev_year, prev_age);
                year_start_age = age;
            }
        } else {
            table.year_min = year;
            year_start_age = age;
        }
        table.cells[{year, age}] = entry;
        prev_year = year;
        prev_age = age;
        have_prev = true;
    }

    if (!have_prev) throw data_error("no records found in HMD table");
    close_year(prev_year, prev_age);

    table.year_max = prev_year;
    table.age_min = first_age;
    table.age_max = last_age;
    return table;
}

HmdTable parse_hmd_file(const std::string& path, HmdColumn column) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    try {
        return parse_hmd_table(in, column);
    } catch (const data_error& e) {
        throw data_error(path + ": " + e.what());
    }
}

MortalitySurface build_surface(const HmdTable& deaths, const HmdTable& exposures,
                               const LexisWindow& window) {
    Grid D = Grid::Zero(window.n_years(), window.n_ages());
    Grid E = Grid::Zero(window.n_years(), window.n_ages());

    auto fetch = [&](const HmdTable& table, int t, int x, const char* what) {
        const HmdTable::Entry* entry = table.find(t, x);
        const std::string cell = "(" + std::to_string(t) + ", " + std::to_string(x) + ")";
        if (!entry)
            throw data_error(std::string(what) + " not covered at " + cell);
        if (entry->missing)
            throw data_error(std::string(what) + " missing ('.') inside window at " + cell);
        if (!(entry->value >= 0.0) || !std::isfinite(entry->value))
            throw data_error(std::string(what) + " negative or non-finite at " + cell);
        return entry->value;
    };

    for (int t = window.t_min; t <= window.t_max; ++t) {
        for (int x = window.x_min; x <= window.x_max; ++x) {
            D(window.row(t), window.col(x)) = fetch(deaths, t, x, "deaths");
            E(window.row(t), window.col(x)) = fetch(exposures, t, x, "exposures");
        }
    }

    MortalitySurface surface{window, std::move(D), std::move(E)};
    surface.validate(); // rejects D > 0 on zero-exposure cells
    return surface;
}

void write_hmd_table(std::ostream& out, const LexisWindow& window, const Grid& values,
                     const std::string& title) {
    out << title << ", (synthetic, period 1x1)\n\n";
    out << "  Year          Age             Female            Male           Total\n";
    for (int t = window.t_min; t <= window.t_max; ++t) {
        for (int x = window.x_min; x <= window.x_max; ++x) {
            const std::string v = format_double(values(window.row(t), window.col(x)));
            out << "  " << t << "    " << (x == 110 ? std::string("110+") : std::to_string(x))
                << "    " << v << "    " << v << "    " << v << "\n";
        }
    }
}

} // namespace sfm
