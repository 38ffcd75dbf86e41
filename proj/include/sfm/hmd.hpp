#ifndef SFM_HMD_HPP
#define SFM_HMD_HPP

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sfm/surface.hpp"
#include "sfm/types.hpp"

namespace sfm {

enum class HmdColumn { Female, Male, Total };

HmdColumn hmd_column_from_name(const std::string& name);

// One value column extracted from an HMD period 1x1 table. Missing entries
// (".") are kept so that surface assembly can reject them inside the window.
struct HmdTable {
    struct Entry {
        double value = 0.0;
        bool missing = false;
    };
    std::map<std::pair<int, int>, Entry> cells; // (year, age) -> entry
    int year_min = 0, year_max = 0;
    int age_min = 0, age_max = 0;

    const Entry* find(int year, int age) const;
};

// HMD period 1x1 layout: descriptive header lines, a blank line, then
// whitespace-separated records `Year Age Female Male Total`. Age "110+"
// maps to 110, "." marks a missing value.
HmdTable parse_hmd_table(std::istream& in, HmdColumn column);
HmdTable parse_hmd_file(const std::string& path, HmdColumn column);

MortalitySurface build_surface(const HmdTable& deaths, const HmdTable& exposures,
                               const LexisWindow& window);

// Writes a grid in the same layout (value replicated across the three sex
// columns) so generated fixtures feed back into parse_hmd_table.
void write_hmd_table(std::ostream& out, const LexisWindow& window, const Grid& values,
                     const std::string& title);

} // namespace sfm

#endif
