#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace signet {

// Flat key-value configuration with dotted section keys:
//
//   # comment
//   training.batch_size = 32
//   loss.formulation = multitask_l2
//
// Later assignments (and merged overrides) win. The hash over the sorted
// key=value pairs is embedded in every artifact a run produces, so stages
// can detect configuration drift.
class Config {
  public:
    Config() = default;

    static Config load(const std::string& path);
    static Config from_string(const std::string& text, const std::string& origin = "<string>");

    void set(const std::string& key, const std::string& value);
    void merge(const Config& overrides);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated list of non-negative integers (e.g. conv widths).
    std::vector<std::size_t> get_size_list(const std::string& key,
                                           const std::vector<std::size_t>& fallback) const;

    std::uint64_t hash() const;
    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace signet
