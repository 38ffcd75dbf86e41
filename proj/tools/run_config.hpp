#ifndef SFM_TOOLS_RUN_CONFIG_HPP
#define SFM_TOOLS_RUN_CONFIG_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfm/types.hpp"

namespace sfm::cli {

// Flat key=value configuration (lines of key = value, # comments); flags override keys.
class KeyValues {
public:
    static KeyValues load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Rejects keys outside the allowed set (typo guard).
    void require_known(const std::vector<std::string>& allowed) const;

    const std::map<std::string, std::string>& items() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

LexisWindow window_from(const KeyValues& kv);

// "lo:step:hi" inclusive grid.
std::vector<double> parse_grid(const std::string& text);

std::uint64_t fnv1a64(const std::string& text);
std::string fnv1a64_hex(const std::string& text);
std::string file_hash(const std::string& path);

} // namespace sfm::cli

#endif
