#pragma once

// Forecast errors, Grassberger-Procaccia correlation dimension, Welch PSD and
// Strouhal number estimation.

#include <span>
#include <vector>

#include "flowmixer/linalg.hpp"

namespace flowmixer::metrics {

using linalg::Matrix;

double mse(const Matrix& pred, const Matrix& truth);
double mae(const Matrix& pred, const Matrix& truth);

struct CorrDimOptions {
    std::size_t n_eps = 24;
    /// Fit range as percentiles of the pair-distance distribution.
    double lo_percentile = 0.5;
    double hi_percentile = 5.0;
    /// Pairs with |i - j| <= theiler are excluded.
    std::size_t theiler = 10;
    double min_r_squared = 0.95;
};

struct CorrDimResult {
    double d2 = 0;
    double r_squared = 0;
    double eps_lo = 0;
    double eps_hi = 0;
    std::size_t n_eps = 0;
    bool valid = false;
    std::vector<double> eps;  // grid
    std::vector<double> c;    // correlation sum at each eps
};

/// Correlation sum C(eps) = fraction of admissible pairs closer than eps.
std::vector<double> correlation_sums(const Matrix& points, const std::vector<double>& eps, std::size_t theiler);

/// Slope of log C against log eps over a log-spaced grid between two distance
/// percentiles. Needs at least 200 points.
CorrDimResult correlation_dimension(const Matrix& points, const CorrDimOptions& opt = {});

struct WelchOptions {
    std::size_t segment = 0;  // 0: length / 8
    double overlap = 0.5;
    std::size_t nfft = 0;     // 0: segment; larger values zero-pad
    bool detrend = false;     // subtract each segment's mean
};

struct Psd {
    std::vector<double> freqs;
    std::vector<double> power;  // one-sided density, units^2 / Hz
};

/// Averaged Hann-windowed periodogram. Summing power * df recovers the mean
/// square of the signal.
Psd welch_psd(std::span<const double> x, double fs, const WelchOptions& opt = {});

/// Dominant frequency of a signal: Welch peak refined by parabolic interpolation.
/// Throws NumericError when no bin stands out from the spectrum.
double dominant_frequency(std::span<const double> x, double dt);

/// f_peak * d / u for a lift coefficient history.
double strouhal(std::span<const double> cl, double dt, double u, double d);

}  // namespace flowmixer::metrics
