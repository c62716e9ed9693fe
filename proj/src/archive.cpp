#include "flowmixer/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flowmixer {

namespace {

constexpr const char* kMagic = "FMXA 1\n";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void append_doubles(std::string& out, const double* p, std::size_t n) {
    const std::size_t start = out.size();
    out.resize(start + n * sizeof(double));
    std::memcpy(out.data() + start, p, n * sizeof(double));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < n; ++i) std::reverse(out.begin() + long(start + 8 * i), out.begin() + long(start + 8 * i + 8));
    }
}

void read_doubles(const char* src, double* dst, std::size_t n) {
    std::memcpy(dst, src, n * sizeof(double));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(dst);
        for (std::size_t i = 0; i < n; ++i) std::reverse(b + 8 * i, b + 8 * i + 8);
    }
}

void check_name(const std::string& name) {
    if (name.empty() || name.find_first_of(",\r\n") != std::string::npos) {
        throw ConfigError("archive: invalid array name '" + name + "'");
    }
}

}  // namespace

const Archive::Entry* Archive::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

void Archive::put(const std::string& name, linalg::Matrix m) {
    check_name(name);
    for (auto& e : entries_)
        if (e.name == name) {
            e.value = std::move(m);
            return;
        }
    entries_.push_back({name, std::move(m)});
}

void Archive::put(const std::string& name, linalg::CMatrix m) {
    check_name(name);
    for (auto& e : entries_)
        if (e.name == name) {
            e.value = std::move(m);
            return;
        }
    entries_.push_back({name, std::move(m)});
}

bool Archive::has(const std::string& name) const { return find(name) != nullptr; }

const linalg::Matrix& Archive::real(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw ConfigError("archive: no array named '" + name + "'");
    if (auto* m = std::get_if<linalg::Matrix>(&e->value)) return *m;
    throw ConfigError("archive: array '" + name + "' is complex, expected f64");
}

const linalg::CMatrix& Archive::complex(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw ConfigError("archive: no array named '" + name + "'");
    if (auto* m = std::get_if<linalg::CMatrix>(&e->value)) return *m;
    throw ConfigError("archive: array '" + name + "' is real, expected c64");
}

std::vector<std::string> Archive::names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::string Archive::serialize() const {
    std::string out = kMagic;
    for (const auto& e : entries_) {
        std::visit(
            [&](const auto& m) {
                using M = std::decay_t<decltype(m)>;
                const bool cplx = std::is_same_v<M, linalg::CMatrix>;
                out += e.name + ", dtype=" + (cplx ? "c64" : "f64") + ", shape=" + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + "\n";
                append_doubles(out, reinterpret_cast<const double*>(m.data()), m.size() * (cplx ? 2 : 1));
            },
            e.value);
    }
    return out;
}

Archive Archive::deserialize(const std::string& bytes, const std::string& origin) {
    const std::string magic = kMagic;
    if (bytes.compare(0, magic.size(), magic) != 0) {
        throw ConfigError(origin + ": not a named-array archive (bad magic)");
    }
    Archive ar;
    std::size_t pos = magic.size();
    int index = 0;
    while (pos < bytes.size()) {
        ++index;
        const std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string::npos) throw ConfigError(origin + ": truncated header for array #" + std::to_string(index));
        const std::string header = bytes.substr(pos, eol - pos);
        pos = eol + 1;

        const std::size_t c1 = header.find(", dtype=");
        const std::size_t c2 = header.find(", shape=");
        if (c1 == std::string::npos || c2 == std::string::npos || c2 < c1) {
            throw ConfigError(origin + ": malformed header '" + header + "'");
        }
        const std::string name = header.substr(0, c1);
        const std::string dtype = header.substr(c1 + 8, c2 - c1 - 8);
        const std::string shape = header.substr(c2 + 8);
        std::size_t rows = 0, cols = 0;
        {
            const std::size_t x = shape.find('x');
            if (x == std::string::npos) throw ConfigError(origin + ": malformed shape '" + shape + "'");
            try {
                std::size_t used = 0;
                rows = std::stoull(shape.substr(0, x), &used);
                if (used != x) throw std::invalid_argument("rows");
                const std::string cs = shape.substr(x + 1);
                cols = std::stoull(cs, &used);
                if (used != cs.size()) throw std::invalid_argument("cols");
            } catch (const std::exception&) {
                throw ConfigError(origin + ": malformed shape '" + shape + "'");
            }
        }
        if (ar.has(name)) throw ConfigError(origin + ": duplicate array '" + name + "'");
        const bool cplx = dtype == "c64";
        if (!cplx && dtype != "f64") throw ConfigError(origin + ": unknown dtype '" + dtype + "'");
        const std::size_t n = rows * cols * (cplx ? 2 : 1);
        if (bytes.size() - pos < n * sizeof(double)) {
            throw ConfigError(origin + ": truncated payload for array '" + name + "'");
        }
        if (cplx) {
            linalg::CMatrix m(rows, cols);
            read_doubles(bytes.data() + pos, reinterpret_cast<double*>(m.data()), n);
            ar.put(name, std::move(m));
        } else {
            linalg::Matrix m(rows, cols);
            read_doubles(bytes.data() + pos, m.data(), n);
            ar.put(name, std::move(m));
        }
        pos += n * sizeof(double);
    }
    return ar;
}

void Archive::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write archive " + path.string());
    const std::string bytes = serialize();
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw ConfigError("failed writing archive " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open archive " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str(), path.string());
}

}  // namespace flowmixer
