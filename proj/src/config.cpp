#include "flowmixer/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flowmixer/error.hpp"

namespace flowmixer {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : v) {
        if (ch == ',' || ch == ' ' || ch == '\t' || ch == '[' || ch == ']') {
            if (!cur.empty()) out.push_back(cur), cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    if (out.size() == 1 && out[0] == "-") out.clear();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && errno != ERANGE;
}

bool parse_int(const std::string& s, long long& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && p == s.data() + s.size()) return true;
    // Accept integral values written in float notation, e.g. 1e3.
    double d = 0;
    if (parse_double(s, d) && d == double((long long)d)) {
        out = (long long)d;
        return true;
    }
    return false;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::string section;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view raw = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        const auto hash = raw.find_first_of("#;");
        std::string line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
        if (line.empty()) {
            if (eol == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            }
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
            if (!c.data_.count(section)) c.order_.push_back(section);
            c.data_[section];
        } else {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
            }
            std::string key = trim(std::string_view(line).substr(0, eq));
            std::string value = trim(std::string_view(line).substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": missing key before '='");
            if (!c.data_.count(section)) c.order_.push_back(section);
            c.data_[section][key] = Value{value, lineno};
        }
        if (eol == text.size()) break;
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key).has_value(); }

std::optional<std::string> Config::find(const std::string& section, const std::string& key) const {
    auto s = data_.find(section);
    if (s == data_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second.text;
}

std::string Config::get(const std::string& section, const std::string& key) const {
    auto v = find(section, key);
    if (!v) throw ConfigError(origin_ + ": missing key '" + key + "' in section [" + section + "]");
    return *v;
}

std::string Config::get(const std::string& section, const std::string& key, const std::string& fallback) const {
    return find(section, key).value_or(fallback);
}

void Config::bad_value(const std::string& section, const std::string& key, const char* what) const {
    const Value& v = data_.at(section).at(key);
    std::string where = origin_;
    if (v.line > 0) where += ":" + std::to_string(v.line);
    throw ConfigError(where + ": key '" + key + "' expects " + what + ", got '" + v.text + "'");
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    double d = 0;
    if (!parse_double(*v, d)) bad_value(section, key, "a number");
    return d;
}

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    long long i = 0;
    if (!parse_int(*v, i)) bad_value(section, key, "an integer");
    return i;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    auto v = find(section, key);
    if (!v) return fallback;
    std::string s = *v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad_value(section, key, "a boolean");
}

std::vector<long long> Config::get_int_list(const std::string& section, const std::string& key) const {
    auto v = find(section, key);
    if (!v) return {};
    std::vector<long long> out;
    for (const auto& item : split_list(*v)) {
        // "24x4" style products, as written in hyperparameter tables.
        long long prod = 1;
        std::size_t start = 0;
        while (true) {
            const auto x = item.find_first_of("x*", start);
            long long f = 0;
            if (!parse_int(item.substr(start, x == std::string::npos ? std::string::npos : x - start), f)) {
                bad_value(section, key, "a list of integers");
            }
            prod *= f;
            if (x == std::string::npos) break;
            start = x + 1;
        }
        out.push_back(prod);
    }
    return out;
}

std::vector<double> Config::get_double_list(const std::string& section, const std::string& key) const {
    auto v = find(section, key);
    if (!v) return {};
    std::vector<double> out;
    for (const auto& item : split_list(*v)) {
        double d = 0;
        if (!parse_double(item, d)) bad_value(section, key, "a list of numbers");
        out.push_back(d);
    }
    return out;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    if (!data_.count(section)) order_.push_back(section);
    data_[section][key] = Value{value, 0};
}

void Config::merge(const Config& other) {
    for (const auto& s : other.order_)
        for (const auto& [k, v] : other.data_.at(s)) {
            if (!data_.count(s)) order_.push_back(s);
            data_[s][k] = v;
        }
}

std::vector<std::string> Config::sections() const { return order_; }

std::vector<std::string> Config::keys(const std::string& section) const {
    std::vector<std::string> out;
    auto s = data_.find(section);
    if (s != data_.end())
        for (const auto& [k, v] : s->second) out.push_back(k);
    return out;
}

std::string Config::to_string() const {
    std::ostringstream os;
    bool first = true;
    std::vector<std::string> order = order_;
    // Unsectioned keys must come before any header.
    std::stable_partition(order.begin(), order.end(), [](const std::string& s) { return s.empty(); });
    for (const auto& s : order) {
        if (!first) os << '\n';
        first = false;
        if (!s.empty()) os << '[' << s << "]\n";
        for (const auto& [k, v] : data_.at(s)) os << k << " = " << v.text << '\n';
    }
    return os.str();
}

void Config::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write config file " + path.string());
    f << to_string();
}

std::string format_number(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

}  // namespace flowmixer
