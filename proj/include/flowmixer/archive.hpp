#pragma once

// Named-array archive: an ordered collection of real or complex matrices
// stored in one binary file. Layout is described in docs/archive-format.md.

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "flowmixer/linalg.hpp"

namespace flowmixer {

class Archive {
public:
    using Array = std::variant<linalg::Matrix, linalg::CMatrix>;

    /// Adds or replaces an array. Names may not contain ',' or newlines.
    void put(const std::string& name, linalg::Matrix m);
    void put(const std::string& name, linalg::CMatrix m);

    bool has(const std::string& name) const;
    const linalg::Matrix& real(const std::string& name) const;
    const linalg::CMatrix& complex(const std::string& name) const;
    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return entries_.size(); }

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

    /// Serialized bytes, identical to the file written by save().
    std::string serialize() const;
    static Archive deserialize(const std::string& bytes, const std::string& origin = "<memory>");

private:
    struct Entry {
        std::string name;
        Array value;
    };
    const Entry* find(const std::string& name) const;
    std::vector<Entry> entries_;
};

}  // namespace flowmixer
