#include "flowmixer/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flowmixer/archive.hpp"
#include "flowmixer/error.hpp"

namespace flowmixer::datagen {

OdeSystem OdeSystem::make(SystemKind kind) {
    OdeSystem s;
    s.kind = kind;
    switch (kind) {
        case SystemKind::lorenz: s.params = {{"sigma", 10.0}, {"beta", 8.0 / 3.0}, {"rho", 28.0}, {"rate", 1.0}}; break;
        case SystemKind::rossler: s.params = {{"a", 0.2}, {"b", 0.2}, {"c", 5.7}, {"rate", 1.0}}; break;
        case SystemKind::aizawa:
            s.params = {{"a", 0.95}, {"b", 0.7}, {"c", 0.6}, {"d", 3.5}, {"e", 0.25}, {"f", 0.1}, {"standard_form", 0.0},
                        {"rate", 1.0}};
            break;
    }
    return s;
}

OdeSystem OdeSystem::make(const std::string& name) {
    if (name == "lorenz") return make(SystemKind::lorenz);
    if (name == "rossler") return make(SystemKind::rossler);
    if (name == "aizawa") return make(SystemKind::aizawa);
    throw ConfigError("unknown system '" + name + "' (lorenz, rossler, aizawa)");
}

std::string OdeSystem::name() const {
    switch (kind) {
        case SystemKind::lorenz: return "lorenz";
        case SystemKind::rossler: return "rossler";
        case SystemKind::aizawa: return "aizawa";
    }
    return "?";
}

double OdeSystem::param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw ConfigError(name() + ": unknown parameter '" + key + "'");
    return it->second;
}

State OdeSystem::rhs(const State& s) const {
    auto it = params.find("rate");
    const double rate = it == params.end() ? 1.0 : it->second;
    State d = raw_rhs(s);
    if (rate != 1.0)
        for (double& v : d) v *= rate;
    return d;
}

State OdeSystem::raw_rhs(const State& s) const {
    const double x = s[0], y = s[1], z = s[2];
    switch (kind) {
        case SystemKind::lorenz: {
            const double sg = param("sigma"), b = param("beta"), r = param("rho");
            return {sg * (y - x), x * (r - z) - y, x * y - b * z};
        }
        case SystemKind::rossler: {
            const double a = param("a"), b = param("b"), c = param("c");
            return {-y - z, x + a * y, b + z * (x - c)};
        }
        case SystemKind::aizawa: {
            const double a = param("a"), b = param("b"), c = param("c"), d = param("d"), e = param("e"),
                         f = param("f");
            const double last = param("standard_form") != 0.0 ? f * z * x * x * x : f * z * z * z / 3.0;
            return {(z - b) * x - d * y, d * x + (z - b) * y,
                    c + a * z - z * z * z / 3.0 - (x * x + y * y) * (1.0 + e * z) + last};
        }
    }
    return {0, 0, 0};
}

Matrix rk4_integrate(const OdeSystem& sys, const State& x0, double dt, std::size_t steps, std::size_t transient) {
    if (!(dt > 0)) throw ConfigError("rk4_integrate: dt must be positive");
    if (steps <= transient) throw ConfigError("rk4_integrate: steps must exceed the transient");
    Matrix out(steps - transient, 3);
    State s = x0;
    auto axpy = [](const State& a, double h, const State& k) { return State{a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2]}; };
    for (std::size_t n = 1; n <= steps; ++n) {
        const State k1 = sys.rhs(s);
        const State k2 = sys.rhs(axpy(s, dt / 2, k1));
        const State k3 = sys.rhs(axpy(s, dt / 2, k2));
        const State k4 = sys.rhs(axpy(s, dt, k3));
        for (int i = 0; i < 3; ++i) s[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || !std::isfinite(s[2])) {
            throw NumericError("rk4_integrate: state blew up at step " + std::to_string(n));
        }
        if (n > transient)
            for (int i = 0; i < 3; ++i) out(n - transient - 1, std::size_t(i)) = s[std::size_t(i)];
    }
    return out;
}

Matrix subsample(const Matrix& traj, std::size_t factor) {
    if (factor < 1) throw ConfigError("subsample: factor must be at least 1");
    const std::size_t n = traj.rows() / factor;
    Matrix out(n, traj.cols());
    for (std::size_t i = 0; i < n; ++i)
        std::copy(traj.row(i * factor).begin(), traj.row(i * factor).end(), out.row(i).begin());
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') quoted = !quoted;
        else if (ch == ',' && !quoted) out.push_back(cur), cur.clear();
        else if (ch != '\r') cur += ch;
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

bool to_number(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

Matrix load_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_columns,
                std::vector<std::string>* names) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open CSV " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ConfigError(path.string() + ": empty file");
    const auto header = split_csv_line(line);

    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                              " cells, found " + std::to_string(cells.size()));
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw ConfigError(path.string() + ": no data rows after the header");

    std::vector<std::size_t> cols;
    if (feature_columns.empty()) {
        double tmp = 0;
        const std::size_t first = to_number(rows[0][0], tmp) ? 0 : 1;
        for (std::size_t j = first; j < header.size(); ++j) cols.push_back(j);
    } else {
        for (const auto& name : feature_columns) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw ConfigError(path.string() + ": missing column '" + name + "'");
            cols.push_back(std::size_t(it - header.begin()));
        }
    }
    if (cols.empty()) throw ConfigError(path.string() + ": no feature columns");

    Matrix m(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < cols.size(); ++k) {
            double v = 0;
            if (!to_number(rows[i][cols[k]], v)) {
                throw ConfigError(path.string() + ":" + std::to_string(i + 2) + ": non-numeric value '" + rows[i][cols[k]] +
                                  "' in column '" + header[cols[k]] + "'");
            }
            m(i, k) = v;
        }
    if (names) {
        names->clear();
        for (auto j : cols) names->push_back(header[j]);
    }
    return m;
}

void write_csv(const std::filesystem::path& path, const Matrix& m, const std::vector<std::string>& header) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write CSV " + path.string());
    if (!header.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
        f << '\n';
    }
    f.precision(17);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) f << (j ? "," : "") << m(i, j);
        f << '\n';
    }
}

std::string to_string(Scaling s) {
    switch (s) {
        case Scaling::zscore: return "zscore";
        case Scaling::minmax_unit: return "minmax";
        case Scaling::none: return "none";
    }
    return "?";
}

Scaling parse_scaling(const std::string& s) {
    if (s == "zscore" || s == "zscore_per_feature") return Scaling::zscore;
    if (s == "minmax" || s == "minmax_unit") return Scaling::minmax_unit;
    if (s == "none") return Scaling::none;
    throw ConfigError("unknown scaling '" + s + "' (zscore, minmax, none)");
}

std::pair<std::size_t, std::size_t> SeriesDataset::bounds(Split s) const {
    switch (s) {
        case Split::train: return {0, train_end};
        case Split::val: return {train_end, val_end};
        case Split::test: return {val_end, test_end};
    }
    return {0, 0};
}

Matrix SeriesDataset::apply_scale(const Matrix& r) const {
    if (r.cols() != features()) throw DimensionError("apply_scale: feature count mismatch");
    Matrix d = r;
    if (scaling == Scaling::none) return d;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) {
            if (scaling == Scaling::zscore) d(i, j) = (r(i, j) - offset[j]) / scale[j];
            else d(i, j) = scale[j] > 0 ? 2.0 * (r(i, j) - offset[j]) / scale[j] - 1.0 : 0.0;
        }
    return d;
}

Matrix SeriesDataset::inverse_scale(const Matrix& d) const {
    if (d.cols() != features()) throw DimensionError("inverse_scale: feature count mismatch");
    Matrix r = d;
    if (scaling == Scaling::none) return r;
    for (std::size_t i = 0; i < r.rows(); ++i)
        for (std::size_t j = 0; j < r.cols(); ++j) {
            if (scaling == Scaling::zscore) r(i, j) = d(i, j) * scale[j] + offset[j];
            else r(i, j) = (d(i, j) + 1.0) * 0.5 * scale[j] + offset[j];
        }
    return r;
}

SeriesDataset make_dataset(Matrix raw, Scaling scaling, const std::array<double, 3>& ratios) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (!(ratios[0] > 0 && ratios[1] > 0 && ratios[2] > 0) || total > 1.0 + 1e-12) {
        throw ConfigError("split ratios must be positive and sum to at most 1");
    }
    SeriesDataset ds;
    const std::size_t n = raw.rows(), f = raw.cols();
    auto cut = [&](double r) { return std::min(n, std::size_t(std::floor(double(n) * r + 1e-9))); };
    ds.train_end = cut(ratios[0]);
    ds.val_end = cut(ratios[0] + ratios[1]);
    ds.test_end = cut(total);
    if (ds.train_end == 0 || ds.val_end <= ds.train_end || ds.test_end <= ds.val_end) {
        throw ConfigError("series of length " + std::to_string(n) + " is too short for the requested splits");
    }
    ds.scaling = scaling;
    ds.offset.assign(f, 0.0);
    ds.scale.assign(f, 1.0);
    if (scaling == Scaling::zscore) {
        const std::size_t m = ds.train_end;
        for (std::size_t j = 0; j < f; ++j) {
            double mean = 0;
            for (std::size_t i = 0; i < m; ++i) mean += raw(i, j);
            mean /= double(m);
            double var = 0;
            for (std::size_t i = 0; i < m; ++i) var += (raw(i, j) - mean) * (raw(i, j) - mean);
            const double sd = std::sqrt(var / double(m));
            ds.offset[j] = mean;
            ds.scale[j] = sd > 0 ? sd : 1.0;
        }
    } else if (scaling == Scaling::minmax_unit) {
        for (std::size_t j = 0; j < f; ++j) {
            double lo = raw(0, j), hi = raw(0, j);
            for (std::size_t i = 0; i < n; ++i) lo = std::min(lo, raw(i, j)), hi = std::max(hi, raw(i, j));
            ds.offset[j] = lo;
            ds.scale[j] = hi - lo;
        }
    }
    ds.raw = std::move(raw);
    ds.data = ds.apply_scale(ds.raw);
    ds.provenance.set("dataset", "scaling", to_string(scaling));
    ds.provenance.set("dataset", "rows", std::to_string(n));
    ds.provenance.set("dataset", "features", std::to_string(f));
    ds.provenance.set("dataset", "ratios",
                      format_number(ratios[0]) + ", " + format_number(ratios[1]) + ", " + format_number(ratios[2]));
    return ds;
}

void save_dataset(const std::filesystem::path& path, const SeriesDataset& ds) {
    Archive ar;
    ar.put("data", ds.data);
    ar.put("raw", ds.raw);
    ar.put("offset", Matrix(1, ds.offset.size(), ds.offset));
    ar.put("scale", Matrix(1, ds.scale.size(), ds.scale));
    ar.put("splits", Matrix{{double(ds.train_end), double(ds.val_end), double(ds.test_end), double(int(ds.scaling))}});
    ar.save(path);
}

SeriesDataset load_dataset(const std::filesystem::path& path) {
    const Archive ar = Archive::load(path);
    SeriesDataset ds;
    ds.data = ar.real("data");
    ds.raw = ar.real("raw");
    ds.offset = ar.real("offset").storage();
    ds.scale = ar.real("scale").storage();
    const Matrix& sp = ar.real("splits");
    if (sp.size() != 4 || !ds.data.same_shape(ds.raw) || ds.offset.size() != ds.data.cols() ||
        ds.scale.size() != ds.data.cols()) {
        throw ConfigError(path.string() + ": inconsistent dataset archive");
    }
    ds.train_end = std::size_t(sp(0, 0));
    ds.val_end = std::size_t(sp(0, 1));
    ds.test_end = std::size_t(sp(0, 2));
    ds.scaling = Scaling(int(sp(0, 3)));
    if (!(ds.train_end < ds.val_end && ds.val_end < ds.test_end && ds.test_end <= ds.data.rows())) {
        throw ConfigError(path.string() + ": invalid split boundaries");
    }
    return ds;
}

}  // namespace flowmixer::datagen
