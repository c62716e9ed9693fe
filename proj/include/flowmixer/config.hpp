#pragma once

// Sectioned key = value text files.
//
//   # comment
//   [model]
//   n_t = 96
//   periodicities = 24, 168
//
// Keys before the first section header live in section "". Later
// assignments to the same key override earlier ones.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowmixer {

class Config {
public:
    static Config parse(std::string_view text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> find(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    /// Comma- or whitespace-separated list. Empty value or "-" gives an empty list.
    std::vector<long long> get_int_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    /// Overlays every entry of other onto this config.
    void merge(const Config& other);

    std::vector<std::string> sections() const;
    std::vector<std::string> keys(const std::string& section) const;

    std::string to_string() const;
    void save(const std::filesystem::path& path) const;

private:
    struct Value {
        std::string text;
        int line = 0;
    };
    [[noreturn]] void bad_value(const std::string& section, const std::string& key, const char* what) const;

    std::string origin_ = "<config>";
    std::map<std::string, std::map<std::string, Value>> data_;
    std::vector<std::string> order_;
};

/// Shortest decimal text that parses back to exactly the same double.
std::string format_number(double x);

}  // namespace flowmixer
