#pragma once

// Chaotic trajectories, CSV ingestion, scaling and chronological splits.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowmixer/config.hpp"
#include "flowmixer/linalg.hpp"

namespace flowmixer::datagen {

using linalg::Matrix;
using State = std::array<double, 3>;

enum class SystemKind { lorenz, rossler, aizawa };

struct OdeSystem {
    SystemKind kind = SystemKind::lorenz;
    std::map<std::string, double> params;

    /// Default parameters: Lorenz sigma=10, beta=8/3, rho=28; Rossler a=b=0.2, c=5.7;
    /// Aizawa a=0.95, b=0.7, c=0.6, d=3.5, e=0.25, f=0.1. Every system also has a
    /// time-rescaling factor `rate` = 1 multiplying the vector field.
    static OdeSystem make(SystemKind kind);
    static OdeSystem make(const std::string& name);
    std::string name() const;
    double param(const std::string& key) const;
    State rhs(const State& x) const;

private:
    State raw_rhs(const State& x) const;
};

/// Classic fixed-step RK4. Records the states after steps 1..steps and drops the
/// first `transient` of them, giving (steps - transient) rows.
Matrix rk4_integrate(const OdeSystem& sys, const State& x0, double dt, std::size_t steps, std::size_t transient);

/// Every factor-th row starting at row 0.
Matrix subsample(const Matrix& traj, std::size_t factor);

/// Reads a headed CSV. With an empty column list every column is used except
/// a leading timestamp column (detected by a non-numeric first data cell).
Matrix load_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_columns = {},
                std::vector<std::string>* names = nullptr);
void write_csv(const std::filesystem::path& path, const Matrix& m, const std::vector<std::string>& header = {});

enum class Scaling { zscore, minmax_unit, none };
std::string to_string(Scaling s);
Scaling parse_scaling(const std::string& s);

enum class Split { train, val, test };

struct SeriesDataset {
    Matrix raw;
    Matrix data;  // scaled
    Scaling scaling = Scaling::none;
    std::vector<double> offset;  // zscore: mean; minmax: min
    std::vector<double> scale;   // zscore: std;  minmax: max - min
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t test_end = 0;
    Config provenance;

    std::size_t length() const { return data.rows(); }
    std::size_t features() const { return raw.cols(); }
    std::pair<std::size_t, std::size_t> bounds(Split s) const;
    Matrix apply_scale(const Matrix& raw_values) const;
    Matrix inverse_scale(const Matrix& scaled) const;
};

/// Splits at floor(T*r) boundaries. z-score statistics come from the training
/// segment; min-max extrema from the whole series.
SeriesDataset make_dataset(Matrix raw, Scaling scaling, const std::array<double, 3>& ratios);

/// Stores data, raw, scaling and split metadata in a named-array archive.
void save_dataset(const std::filesystem::path& path, const SeriesDataset& ds);
SeriesDataset load_dataset(const std::filesystem::path& path);

}  // namespace flowmixer::datagen
