#include "run_config.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "sfm/csv.hpp"
#include "sfm/errors.hpp"

namespace sfm::cli {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    KeyValues kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw config_error(path + ":" + std::to_string(line_no) + ": empty key");
        kv.values_[key] = value;
    }
    return kv;
}

std::string KeyValues::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("missing config key '" + key + "'");
    return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int KeyValues::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const int n = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "' is not an integer: '" + v + "'");
    }
}

int KeyValues::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KeyValues::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "' is not a number: '" + v + "'");
    }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config key '" + key + "' is not a boolean: '" + v + "'");
}

void KeyValues::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : values_)
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw config_error("unknown config key '" + key + "'");
}

LexisWindow window_from(const KeyValues& kv) {
    const int t_min = kv.get_int("t_min");
    const int t_max = kv.get_int("t_max");
    const int x_min = kv.get_int("x_min");
    const int x_max = kv.get_int("x_max");
    if (t_min > t_max) throw config_error("t_min exceeds t_max");
    if (x_min < 0) throw config_error("x_min is negative");
    if (x_min > x_max) throw config_error("x_min exceeds x_max");
    if (x_max > 110) throw config_error("x_max exceeds 110");
    return LexisWindow(t_min, t_max, x_min, x_max);
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> parts;
    std::istringstream iss(text);
    std::string tok;
    while (std::getline(iss, tok, ':')) parts.push_back(parse_double(tok));
    if (parts.size() != 3 || parts[1] <= 0.0 || parts[2] < parts[0])
        throw config_error("grid must be lo:step:hi, got '" + text + "'");
    std::vector<double> grid;
    for (double v = parts[0]; v <= parts[2] + 1e-12; v += parts[1]) grid.push_back(v);
    return grid;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open '" + path + "' for hashing");
    std::ostringstream ss;
    ss << in.rdbuf();
    return "fnv1a64:" + fnv1a64_hex(ss.str());
}

} // namespace sfm::cli
