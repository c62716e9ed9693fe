#include "flowmixer/spectral.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "flowmixer/archive.hpp"
#include "flowmixer/error.hpp"

namespace flowmixer::spectral {

namespace {

void check_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw DimensionError(std::string("kk_decompose: ") + what + " must be square and nonempty");
}

CMatrix checked_inverse(const CMatrix& v, const char* what) {
    const double rc = linalg::rcond_c(v);
    if (!(rc * kMaxEigvecCondition >= 1.0)) {
        std::ostringstream os;
        os << "kk_decompose: " << what << " eigenvector matrix is numerically defective (condition ~ "
           << (rc > 0 ? 1.0 / rc : INFINITY) << ", limit " << kMaxEigvecCondition << ")";
        throw NumericError(os.str());
    }
    return linalg::inverse_c(v);
}

// Scales every coefficient by f(mu_i lam_j, Log(mu_i lam_j)) and returns the real part
// of the synthesized matrix.
template <class F>
Matrix spectral_map(const Matrix& x, const KKSpectrum& s, F f, double* imag_residue) {
    KKModes m = project(x, s);
    bool near_cut = false;
    for (std::size_t i = 0; i < s.time_dim(); ++i)
        for (std::size_t j = 0; j < s.feature_dim(); ++j) {
            const cdouble z = s.product(i, j);
            if (z == cdouble(0.0, 0.0))
                throw NumericError("eigenvalue product mu_" + std::to_string(i) + " lam_" + std::to_string(j) +
                                   " is zero; its logarithm is undefined");
            if (z.real() < 0 && std::abs(z.imag()) <= 1e-6) near_cut = true;
            m.a(i, j) *= f(z, std::log(z));
        }
    if (near_cut) warn("eigenvalue product within 1e-6 of the negative real axis; principal-branch result is branch sensitive");
    const CMatrix y = synthesize(m.a, s);
    if (imag_residue) *imag_residue = linalg::max_abs(linalg::imag_part(y));
    return linalg::real_part(y);
}

}  // namespace

KKSpectrum kk_decompose(const Matrix& wt, const Matrix& wf) {
    check_square(wt, "W_t");
    check_square(wf, "W_f");
    KKSpectrum s;
    auto et = linalg::eig_general(wt);
    auto ef = linalg::eig_general(wf);
    s.mu = std::move(et.values);
    s.q = std::move(et.vectors);
    s.lam = std::move(ef.values);
    s.p = std::move(ef.vectors);
    s.qinv = checked_inverse(s.q, "time");
    s.pinv = checked_inverse(s.p, "feature");
    return s;
}

KKModes project(const Matrix& x, const KKSpectrum& s) {
    if (x.rows() != s.time_dim() || x.cols() != s.feature_dim()) {
        throw DimensionError("project: input is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                             ", spectrum is " + std::to_string(s.time_dim()) + "x" + std::to_string(s.feature_dim()));
    }
    return {linalg::matmul(linalg::matmul(s.qinv, linalg::to_complex(x)), linalg::transpose(s.pinv))};
}

CMatrix synthesize(const CMatrix& c, const KKSpectrum& s) {
    if (c.rows() != s.time_dim() || c.cols() != s.feature_dim()) throw DimensionError("synthesize: coefficient shape");
    return linalg::matmul(linalg::matmul(s.q, c), linalg::transpose(s.p));
}

CMatrix kk_mode(const KKSpectrum& s, std::size_t i, std::size_t j) {
    if (i >= s.time_dim() || j >= s.feature_dim())
        throw DimensionError("kk_mode: index (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
    CMatrix phi(s.time_dim(), s.feature_dim());
    for (std::size_t r = 0; r < s.time_dim(); ++r)
        for (std::size_t c = 0; c < s.feature_dim(); ++c) phi(r, c) = s.q(r, i) * s.p(c, j);
    return phi;
}

Matrix morph_horizon(const Matrix& x, const KKSpectrum& s, double t, double* imag_residue) {
    if (!(t > 0)) throw ConfigError("morph_horizon: t must be positive");
    return spectral_map(x, s, [t](cdouble, cdouble log_z) { return std::exp(t * log_z); }, imag_residue);
}

Matrix fractional_derivative(const Matrix& x, const KKSpectrum& s, double t, double order, double* imag_residue) {
    if (!(order > 0)) throw ConfigError("fractional_derivative: order must be positive");
    return spectral_map(
        x, s,
        [t, order](cdouble, cdouble log_z) {
            if (log_z == cdouble(0.0, 0.0)) return cdouble(0.0, 0.0);
            return std::exp(t * log_z) * std::exp(order * std::log(log_z));
        },
        imag_residue);
}

StabilityReport stability_report(const KKSpectrum& s) {
    StabilityReport r;
    for (auto v : s.mu) r.spectral_radius_time = std::max(r.spectral_radius_time, std::abs(v));
    for (auto v : s.lam) r.spectral_radius_feature = std::max(r.spectral_radius_feature, std::abs(v));
    for (auto m : s.mu)
        for (auto l : s.lam) r.max_product_modulus = std::max(r.max_product_modulus, std::abs(m * l));
    r.inside_unit_circle = r.max_product_modulus <= 1.0 + 1e-9;
    return r;
}

void export_modes(const std::filesystem::path& stem, const KKSpectrum& s, const KKModes& m) {
    Archive ar;
    ar.put("lam", CMatrix(1, s.lam.size(), s.lam));
    ar.put("mu", CMatrix(1, s.mu.size(), s.mu));
    ar.put("a", m.a);
    ar.save(std::filesystem::path(stem.string() + ".fmxa"));

    const std::filesystem::path csv(stem.string() + ".csv");
    std::ofstream out(csv);
    if (!out) throw Error("cannot write " + csv.string());
    out.precision(17);
    out << "i,j,re,im,abs,abs_a\n";
    for (std::size_t i = 0; i < s.time_dim(); ++i)
        for (std::size_t j = 0; j < s.feature_dim(); ++j) {
            const cdouble z = s.product(i, j);
            out << i << ',' << j << ',' << z.real() << ',' << z.imag() << ',' << std::abs(z) << ','
                << std::abs(m.a(i, j)) << '\n';
        }
    if (!out) throw Error("write failed: " + csv.string());
}

}  // namespace flowmixer::spectral
