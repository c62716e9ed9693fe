#include "flowmixer/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <fftw3.h>

#include "fftw_lock.hpp"
#include "flowmixer/error.hpp"

namespace flowmixer::metrics {

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " differ");
    }
}

// Calls f(squared distance) for every admissible pair.
template <class F>
void for_each_pair(const Matrix& p, std::size_t theiler, F&& f) {
    const std::size_t n = p.rows(), d = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = &p(i, 0);
        for (std::size_t j = i + 1 + theiler; j < n; ++j) {
            const double* b = &p(j, 0);
            double s = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const double t = a[k] - b[k];
                s += t * t;
            }
            f(s);
        }
    }
}

struct FftPlan {
    std::size_t n;
    std::vector<double> in;
    fftw_complex* out;
    fftw_plan plan;

    explicit FftPlan(std::size_t len) : n(len), in(len) {
        out = fftw_alloc_complex(len / 2 + 1);
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(int(len), in.data(), out, FFTW_ESTIMATE);
    }
    ~FftPlan() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan);
        fftw_free(out);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
};

}  // namespace

double mse(const Matrix& pred, const Matrix& truth) {
    same_shape(pred, truth, "mse");
    if (pred.size() == 0) throw DimensionError("mse: empty input");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.flat()[i] - truth.flat()[i];
        s += d * d;
    }
    return s / double(pred.size());
}

double mae(const Matrix& pred, const Matrix& truth) {
    same_shape(pred, truth, "mae");
    if (pred.size() == 0) throw DimensionError("mae: empty input");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.flat()[i] - truth.flat()[i]);
    return s / double(pred.size());
}

std::vector<double> correlation_sums(const Matrix& points, const std::vector<double>& eps, std::size_t theiler) {
    if (!std::is_sorted(eps.begin(), eps.end())) throw ConfigError("correlation_sums: eps grid must be ascending");
    std::vector<double> eps2(eps.size());
    for (std::size_t k = 0; k < eps.size(); ++k) eps2[k] = eps[k] * eps[k];
    std::vector<std::uint64_t> hits(eps.size() + 1, 0);
    std::uint64_t total = 0;
    for_each_pair(points, theiler, [&](double s) {
        ++hits[std::size_t(std::upper_bound(eps2.begin(), eps2.end(), s) - eps2.begin())];
        ++total;
    });
    std::vector<double> c(eps.size(), 0.0);
    if (total == 0) return c;
    std::uint64_t acc = 0;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        acc += hits[k];
        c[k] = double(acc) / double(total);
    }
    return c;
}

CorrDimResult correlation_dimension(const Matrix& points, const CorrDimOptions& opt) {
    if (points.rows() < 200) {
        throw ConfigError("correlation_dimension: needs at least 200 points, got " + std::to_string(points.rows()));
    }
    if (!(0 < opt.lo_percentile && opt.lo_percentile < opt.hi_percentile && opt.hi_percentile <= 100) ||
        opt.n_eps < 3) {
        throw ConfigError("correlation_dimension: invalid percentile range or grid size");
    }
    if (!linalg::all_finite(points)) throw NumericError("correlation_dimension: non-finite points");

    // Pass 1: range of positive squared distances.
    double lo2 = INFINITY, hi2 = 0;
    std::uint64_t total = 0, zeros = 0;
    for_each_pair(points, opt.theiler, [&](double s) {
        ++total;
        if (s == 0) {
            ++zeros;
            return;
        }
        lo2 = std::min(lo2, s);
        hi2 = std::max(hi2, s);
    });
    if (total == 0) throw ConfigError("correlation_dimension: Theiler window leaves no pairs");
    if (hi2 == 0) throw NumericError("correlation_dimension: all pair distances are zero");

    // Pass 2: log-spaced histogram of distances for the percentiles.
    constexpr std::size_t kBins = 1 << 16;
    const double llo = 0.5 * std::log(lo2), lhi = 0.5 * std::log(hi2);
    const double width = std::max(lhi - llo, 1e-12) / double(kBins);
    std::vector<std::uint64_t> hist(kBins, 0);
    for_each_pair(points, opt.theiler, [&](double s) {
        if (s == 0) return;
        const auto b = std::size_t((0.5 * std::log(s) - llo) / width);
        ++hist[std::min(b, kBins - 1)];
    });
    auto percentile = [&](double pct) {
        const double target = pct / 100.0 * double(total);
        double acc = double(zeros);
        if (acc >= target) return std::exp(llo);
        for (std::size_t b = 0; b < kBins; ++b) {
            const double next = acc + double(hist[b]);
            if (next >= target) {
                const double frac = hist[b] ? (target - acc) / double(hist[b]) : 0.0;
                return std::exp(llo + (double(b) + frac) * width);
            }
            acc = next;
        }
        return std::exp(lhi);
    };

    CorrDimResult r;
    r.eps_lo = percentile(opt.lo_percentile);
    r.eps_hi = percentile(opt.hi_percentile);
    r.n_eps = opt.n_eps;
    if (!(r.eps_hi > r.eps_lo)) throw NumericError("correlation_dimension: degenerate fit range");
    r.eps.resize(opt.n_eps);
    const double a = std::log(r.eps_lo), b = std::log(r.eps_hi);
    for (std::size_t k = 0; k < opt.n_eps; ++k) r.eps[k] = std::exp(a + (b - a) * double(k) / double(opt.n_eps - 1));

    // Pass 3: exact correlation sums on the grid.
    r.c = correlation_sums(points, r.eps, opt.theiler);

    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < opt.n_eps; ++k)
        if (r.c[k] > 0) lx.push_back(std::log(r.eps[k])), ly.push_back(std::log(r.c[k]));
    if (lx.size() < 3) return r;
    const double n = double(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxx += (lx[k] - mx) * (lx[k] - mx);
        sxy += (lx[k] - mx) * (ly[k] - my);
        syy += (ly[k] - my) * (ly[k] - my);
    }
    r.d2 = sxy / sxx;
    r.r_squared = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
    r.valid = r.r_squared >= opt.min_r_squared && r.d2 > 0;
    return r;
}

Psd welch_psd(std::span<const double> x, double fs, const WelchOptions& opt) {
    const std::size_t n = x.size();
    const std::size_t seg = opt.segment ? opt.segment : n / 8;
    if (!(fs > 0)) throw ConfigError("welch_psd: sampling rate must be positive");
    if (seg < 2 || seg > n) {
        throw ConfigError("welch_psd: segment length " + std::to_string(seg) + " invalid for " + std::to_string(n) +
                          " samples");
    }
    if (!(opt.overlap >= 0 && opt.overlap < 1)) throw ConfigError("welch_psd: overlap must be in [0, 1)");
    const std::size_t nfft = std::max(opt.nfft, seg);
    const std::size_t step = std::max<std::size_t>(1, std::size_t(std::llround(double(seg) * (1 - opt.overlap))));

    // Periodic Hann window.
    std::vector<double> w(seg);
    double wss = 0;
    for (std::size_t i = 0; i < seg; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * double(i) / double(seg));
        wss += w[i] * w[i];
    }

    const std::size_t nbins = nfft / 2 + 1;
    Psd out;
    out.power.assign(nbins, 0.0);
    FftPlan fft(nfft);
    std::size_t count = 0;
    for (std::size_t start = 0; start + seg <= n; start += step, ++count) {
        double mean = 0;
        if (opt.detrend) {
            for (std::size_t i = 0; i < seg; ++i) mean += x[start + i];
            mean /= double(seg);
        }
        std::fill(fft.in.begin(), fft.in.end(), 0.0);
        for (std::size_t i = 0; i < seg; ++i) fft.in[i] = (x[start + i] - mean) * w[i];
        fftw_execute(fft.plan);
        for (std::size_t k = 0; k < nbins; ++k) out.power[k] += fft.out[k][0] * fft.out[k][0] + fft.out[k][1] * fft.out[k][1];
    }
    const double scale = 1.0 / (fs * wss * double(count));
    for (std::size_t k = 0; k < nbins; ++k) {
        const bool edge = k == 0 || (nfft % 2 == 0 && k == nbins - 1);
        out.power[k] *= (edge ? 1.0 : 2.0) * scale;
    }
    out.freqs.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k) out.freqs[k] = double(k) * fs / double(nfft);
    return out;
}

double dominant_frequency(std::span<const double> x, double dt) {
    if (!(dt > 0)) throw ConfigError("dominant_frequency: dt must be positive");
    if (x.size() < 16) throw ConfigError("dominant_frequency: signal too short");
    WelchOptions opt;
    opt.segment = x.size() / 2;
    opt.nfft = std::bit_ceil(opt.segment) * 8;
    opt.detrend = true;
    const Psd p = welch_psd(x, 1.0 / dt, opt);

    std::size_t arg = 1;
    for (std::size_t k = 1; k < p.power.size(); ++k)
        if (p.power[k] > p.power[arg]) arg = k;
    std::vector<double> sorted(p.power.begin() + 1, p.power.end());
    std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    if (!(p.power[arg] > 100.0 * median)) {
        throw NumericError("dominant_frequency: no dominant spectral peak (peak/median power " +
                           std::to_string(median > 0 ? p.power[arg] / median : 0.0) + ")");
    }
    double shift = 0;
    if (arg + 1 < p.power.size()) {
        const double a = p.power[arg - 1], b = p.power[arg], c = p.power[arg + 1];
        const double den = a - 2 * b + c;
        if (den < 0) shift = 0.5 * (a - c) / den;
    }
    const double df = p.freqs[1] - p.freqs[0];
    const double f = (double(arg) + shift) * df;
    const double periods = f * dt * double(x.size());
    if (periods < 10) warn("dominant frequency covers only " + std::to_string(periods) + " periods of the signal");
    return f;
}

double strouhal(std::span<const double> cl, double dt, double u, double d) {
    if (!(u > 0) || !(d > 0)) throw ConfigError("strouhal: velocity and length scale must be positive");
    return dominant_frequency(cl, dt) * d / u;
}

}  // namespace flowmixer::metrics
