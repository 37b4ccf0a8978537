#include "signet/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "signet/errors.hpp"

namespace signet {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

bool valid_key(const std::string& key) {
    if (key.empty() || key.front() == '.' || key.back() == '.') return false;
    for (char c : key) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_';
        if (!ok) return false;
    }
    return true;
}

}  // namespace

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return from_string(text.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected key=value, got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!valid_key(key)) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": invalid key '" + key +
                             "'");
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ConfigError("invalid config key '" + key + "'");
    values_[key] = trim(value);
}

void Config::merge(const Config& overrides) {
    for (const auto& [key, value] : overrides.values_) values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
    const std::string raw = get_string(key);
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(raw.c_str(), &end, 10);
    if (errno != 0 || end == raw.c_str() || *end != '\0') {
        throw ConfigError("config key '" + key + "': not an integer: '" + raw + "'");
    }
    return static_cast<std::int64_t>(v);
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_uint(const std::string& key) const {
    const std::int64_t v = get_int(key);
    if (v < 0) throw ConfigError("config key '" + key + "': must be non-negative");
    return static_cast<std::uint64_t>(v);
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_uint(key) : fallback;
}

double Config::get_double(const std::string& key) const {
    const std::string raw = get_string(key);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (errno != 0 || end == raw.c_str() || *end != '\0') {
        throw ConfigError("config key '" + key + "': not a number: '" + raw + "'");
    }
    return v;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
    const std::string raw = get_string(key);
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw ConfigError("config key '" + key + "': not a boolean: '" + raw + "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::vector<std::size_t> Config::get_size_list(const std::string& key,
                                               const std::vector<std::size_t>& fallback) const {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key);
    std::vector<std::size_t> out;
    std::istringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            throw ConfigError("config key '" + key + "': empty list element in '" + raw + "'");
        }
        errno = 0;
        char* end = nullptr;
        const long long v = std::strtoll(item.c_str(), &end, 10);
        if (errno != 0 || end == item.c_str() || *end != '\0' || v < 0) {
            throw ConfigError("config key '" + key + "': bad list element '" + item + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::uint64_t Config::hash() const {
    // FNV-1a over the canonical "key=value\n" rendering; std::map iteration is
    // already sorted, so the hash is independent of insertion order.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [key, value] : values_) {
        mix(key);
        mix("=");
        mix(value);
        mix("\n");
    }
    return h;
}

}  // namespace signet
