#ifndef SFM_CSV_HPP
#define SFM_CSV_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "sfm/surface.hpp"
#include "sfm/types.hpp"

namespace sfm {

// Shortest representation that round-trips the double exactly.
std::string format_double(double value);

double parse_double(const std::string& token);

std::vector<std::string> split_csv_line(const std::string& line);

// Grid serialization: header `t,x,<value_name>`, one row per cell, LF endings.
void write_grid_csv(std::ostream& out, const LexisWindow& window, const Grid& values,
                    const std::string& value_name);
void write_grid_csv_file(const std::string& path, const LexisWindow& window, const Grid& values,
                         const std::string& value_name);

struct GridCsv {
    LexisWindow window;
    Grid values;
};

GridCsv read_grid_csv(std::istream& in);
GridCsv read_grid_csv_file(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

} // namespace sfm

#endif
