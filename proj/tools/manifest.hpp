#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowmixer/config.hpp"

namespace flowmixer::cli {

/// Record of one artifact-producing run, written next to its outputs. The file
/// is a regular config: passing it back with --config reproduces the run.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    Config config;  // effective configuration snapshot
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    Config results;  // [result] entries and digests
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void add_output(const std::filesystem::path& p) { outputs.push_back(p.string()); }
    void add_input(const std::filesystem::path& p) { inputs.push_back(p.string()); }
    void result(const std::string& key, const std::string& value) { results.set("result", key, value); }
    void result(const std::string& key, double value);

    /// Serialized text; wall-clock is measured from construction.
    std::string to_string() const;
    void write(const std::filesystem::path& path) const;
};

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& p);

std::string tool_version();

}  // namespace flowmixer::cli
