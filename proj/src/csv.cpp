#include "sfm/csv.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace sfm {

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw numeric_error("failed to format double");
    return std::string(buf, ptr);
}

double parse_double(const std::string& token) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw data_error("cannot parse number from '" + token + "'");
    return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream iss(line);
    while (std::getline(iss, field, ',')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(field);
    }
    return fields;
}

void write_grid_csv(std::ostream& out, const LexisWindow& window, const Grid& values,
                    const std::string& value_name) {
    out << "t,x," << value_name << "\n";
    for (int t = window.t_min; t <= window.t_max; ++t)
        for (int x = window.x_min; x <= window.x_max; ++x)
            out << t << "," << x << "," << format_double(values(window.row(t), window.col(x)))
                << "\n";
}

void write_grid_csv_file(const std::string& path, const LexisWindow& window, const Grid& values,
                         const std::string& value_name) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    write_grid_csv(out, window, values, value_name);
}

GridCsv read_grid_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty CSV");
    std::map<std::pair<int, int>, double> cells;
    int t_min = std::numeric_limits<int>::max(), t_max = std::numeric_limits<int>::min();
    int x_min = std::numeric_limits<int>::max(), x_max = std::numeric_limits<int>::min();
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw data_error("line " + std::to_string(line_no) + ": expected 3 CSV fields");
        const int t = static_cast<int>(parse_double(fields[0]));
        const int x = static_cast<int>(parse_double(fields[1]));
        cells[{t, x}] = parse_double(fields[2]);
        t_min = std::min(t_min, t);
        t_max = std::max(t_max, t);
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
    }
    if (cells.empty()) throw data_error("CSV has no data rows");
    LexisWindow window(t_min, t_max, x_min, x_max);
    Grid values = Grid::Zero(window.n_years(), window.n_ages());
    if (static_cast<int>(cells.size()) != window.n_years() * window.n_ages())
        throw data_error("CSV grid has gaps");
    for (const auto& [key, v] : cells) values(window.row(key.first), window.col(key.second)) = v;
    return {window, std::move(values)};
}

GridCsv read_grid_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    try {
        return read_grid_csv(in);
    } catch (const data_error& e) {
        throw data_error(path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << content;
}

} // namespace sfm
