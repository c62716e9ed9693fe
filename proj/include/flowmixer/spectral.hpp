#pragma once

// Kronecker-Koopman spectral analysis of a pair of mixing matrices.
//
// With W_t = Q diag(mu) Q^-1 and W_f = P diag(lam) P^-1, the map X -> W_t X W_f^T
// has eigenmodes q_i p_j^T with eigenvalues mu_i * lam_j. Row index i always
// refers to the time spectrum and column index j to the feature spectrum.

#include <filesystem>
#include <vector>

#include "flowmixer/linalg.hpp"

namespace flowmixer::spectral {

using linalg::cdouble;
using linalg::CMatrix;
using linalg::Matrix;

struct KKSpectrum {
    CMatrix q, qinv;           // time eigenvectors (columns) and inverse
    CMatrix p, pinv;           // feature eigenvectors (columns) and inverse
    std::vector<cdouble> mu;   // time eigenvalues
    std::vector<cdouble> lam;  // feature eigenvalues

    std::size_t time_dim() const { return mu.size(); }
    std::size_t feature_dim() const { return lam.size(); }
    cdouble product(std::size_t i, std::size_t j) const { return mu[i] * lam[j]; }
};

/// Eigenvector matrices with condition number above this are rejected.
inline constexpr double kMaxEigvecCondition = 1e12;

/// Throws NumericError when either eigenvector matrix is ill-conditioned.
KKSpectrum kk_decompose(const Matrix& wt, const Matrix& wf);

struct KKModes {
    CMatrix a;  // n_t x n_f projection coefficients
};

/// a = Q^-1 X P^-T.
KKModes project(const Matrix& x, const KKSpectrum& s);
/// Sum of c_ij q_i p_j^T for arbitrary coefficients.
CMatrix synthesize(const CMatrix& c, const KKSpectrum& s);
/// q_i p_j^T.
CMatrix kk_mode(const KKSpectrum& s, std::size_t i, std::size_t j);

/// Re sum a_ij q_i p_j^T exp(t Log(mu_i lam_j)), principal Log. The discarded
/// imaginary part's largest magnitude is written to imag_residue when given.
Matrix morph_horizon(const Matrix& x, const KKSpectrum& s, double t, double* imag_residue = nullptr);

/// Re sum a_ij q_i p_j^T (mu_i lam_j)^t Log(mu_i lam_j)^order.
Matrix fractional_derivative(const Matrix& x, const KKSpectrum& s, double t, double order,
                             double* imag_residue = nullptr);

struct StabilityReport {
    double spectral_radius_time = 0;
    double spectral_radius_feature = 0;
    double max_product_modulus = 0;
    bool inside_unit_circle = false;
};

StabilityReport stability_report(const KKSpectrum& s);

/// Writes `<stem>.fmxa` (lam, mu as 1-row complex arrays, a as complex) and
/// `<stem>.csv` with one row per mode: i, j, re, im, abs (of mu_i lam_j), abs_a.
void export_modes(const std::filesystem::path& stem, const KKSpectrum& s, const KKModes& m);

}  // namespace flowmixer::spectral
