#include "manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>

#include "flowmixer/error.hpp"

#ifndef FLOWMIXER_VERSION
#define FLOWMIXER_VERSION "0.0.0"
#endif

namespace flowmixer::cli {

namespace {

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out.empty() ? "-" : out;
}

std::string quote_arg(const std::string& a) {
    if (a.find_first_of(" \t\"'") == std::string::npos && !a.empty()) return a;
    std::string q = "'";
    for (char c : a) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

}  // namespace

void RunManifest::result(const std::string& key, double value) { results.set("result", key, format_number(value)); }

std::string RunManifest::to_string() const {
    Config c = config;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<std::string> args, seed_text;
    for (const auto& a : argv) args.push_back(quote_arg(a));
    for (auto s : seeds) seed_text.push_back(std::to_string(s));
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

    c.set("run", "command", command);
    c.set("run", "argv", join(args, " "));
    c.set("run", "seeds", join(seed_text, ", "));
    c.set("run", "inputs", join(inputs, ", "));
    c.set("run", "outputs", join(outputs, ", "));
    c.set("run", "version", tool_version());
    c.set("run", "finished", stamp);
    c.set("run", "wall_clock_seconds", format_number(secs));
    c.merge(results);
    return c.to_string();
}

void RunManifest::write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write manifest " + path.string());
    f << "# flowmixer run manifest\n" << to_string();
}

std::string file_digest(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + p.string());
    std::uint64_t h = 14695981039346656037ULL;
    for (std::istreambuf_iterator<char> it(f), end; it != end; ++it) {
        h ^= std::uint64_t(static_cast<unsigned char>(*it));
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string tool_version() { return FLOWMIXER_VERSION; }

}  // namespace flowmixer::cli
