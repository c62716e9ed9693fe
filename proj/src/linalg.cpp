#include "flowmixer/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <fftw3.h>

#include "fftw_lock.hpp"

std::mutex& flowmixer::detail::fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

namespace flowmixer::linalg {

namespace {

using RowMajorXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorXcd = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorXd> view(const Matrix& m) { return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }
Eigen::Map<RowMajorXd> view(Matrix& m) { return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }
Eigen::Map<const RowMajorXcd> view(const CMatrix& m) { return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }
Eigen::Map<RowMajorXcd> view(CMatrix& m) { return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }

Matrix from_eigen(const Eigen::MatrixXd& e) {
    Matrix m(std::size_t(e.rows()), std::size_t(e.cols()));
    view(m) = e;
    return m;
}

std::string shape(std::size_t r, std::size_t c) {
    std::ostringstream os;
    os << r << 'x' << c;
    return os.str();
}

void require_square(std::size_t r, std::size_t c, const char* what) {
    if (r != c) throw DimensionError(std::string(what) + ": matrix must be square, got " + shape(r, c));
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape(a.rows(), a.cols()) + " * " + shape(b.rows(), b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    if (a.cols() == 0) return c;
    view(c).noalias() = view(a) * view(b);
    return c;
}

CMatrix matmul(const CMatrix& a, const CMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape(a.rows(), a.cols()) + " * " + shape(b.rows(), b.cols()));
    }
    CMatrix c(a.rows(), b.cols());
    if (a.cols() == 0) return c;
    view(c).noalias() = view(a) * view(b);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: " + shape(a.rows(), a.cols()) + "^T * " + shape(b.rows(), b.cols()));
    }
    Matrix c(a.cols(), b.cols());
    if (a.rows() == 0) return c;
    view(c).noalias() = view(a).transpose() * view(b);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: " + shape(a.rows(), a.cols()) + " * " + shape(b.rows(), b.cols()) + "^T");
    }
    Matrix c(a.rows(), b.rows());
    if (a.cols() == 0) return c;
    view(c).noalias() = view(a) * view(b).transpose();
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

CMatrix transpose(const CMatrix& a) {
    CMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("hadamard: " + shape(a.rows(), a.cols()) + " vs " + shape(b.rows(), b.cols()));
    }
    Matrix c(a.rows(), a.cols());
    auto ca = a.flat(), cb = b.flat();
    auto cc = c.flat();
    for (std::size_t i = 0; i < cc.size(); ++i) cc[i] = ca[i] * cb[i];
    return c;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    const std::size_t br = b.rows(), bc = b.cols();
    Matrix k(a.rows() * br, a.cols() * bc);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double s = a(i, j);
            for (std::size_t p = 0; p < br; ++p)
                for (std::size_t q = 0; q < bc; ++q) k(i * br + p, j * bc + q) = s * b(p, q);
        }
    return k;
}

CMatrix to_complex(const Matrix& a) {
    CMatrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i];
    return c;
}

Matrix real_part(const CMatrix& a) {
    Matrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) r.data()[i] = a.data()[i].real();
    return r;
}

Matrix imag_part(const CMatrix& a) {
    Matrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) r.data()[i] = a.data()[i].imag();
    return r;
}

Matrix vec(const Matrix& a) {
    Matrix v(a.size(), 1);
    std::size_t k = 0;
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) v(k++, 0) = a(i, j);
    return v;
}

Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols) throw DimensionError("unvec: length does not match " + shape(rows, cols));
    Matrix a(rows, cols);
    std::size_t k = 0;
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) a(i, j) = v.data()[k++];
    return a;
}

double norm_inf(const Matrix& a) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (double x : a.row(i)) s += std::abs(x);
        best = std::max(best, s);
    }
    return best;
}

double norm_inf(const CMatrix& a) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (const auto& x : a.row(i)) s += std::abs(x);
        best = std::max(best, s);
    }
    return best;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.flat()) m = std::max(m, std::abs(x));
    return m;
}

double max_abs(const CMatrix& a) {
    double m = 0.0;
    for (const auto& x : a.flat()) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double frobenius(const Matrix& a) {
    double s = 0.0;
    for (double x : a.flat()) s += x * x;
    return std::sqrt(s);
}

double trace(const Matrix& a) {
    require_square(a.rows(), a.cols(), "trace");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

double sum(const Matrix& a) {
    double s = 0.0;
    for (double x : a.flat()) s += x;
    return s;
}

bool all_finite(const Matrix& a) {
    return std::all_of(a.flat().begin(), a.flat().end(), [](double x) { return std::isfinite(x); });
}

EigPair eig_general(const Matrix& a) {
    require_square(a.rows(), a.cols(), "eig_general");
    if (!all_finite(a)) throw NumericError("eig_general: non-finite input");
    const std::size_t n = a.rows();
    EigPair out;
    if (n == 0) return out;

    Eigen::MatrixXd m = view(a);
    Eigen::EigenSolver<Eigen::MatrixXd> solver;
    const Eigen::Index max_iter = 40 * Eigen::Index(n);
    solver.setMaxIterations(max_iter);
    solver.compute(m, true);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eig_general: Hessenberg QR did not converge within " + std::to_string(max_iter) +
                           " iterations (n=" + std::to_string(n) + ")");
    }
    const Eigen::VectorXcd vals = solver.eigenvalues();
    const Eigen::MatrixXcd vecs = solver.eigenvectors();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const cdouble a1 = vals(Eigen::Index(x)), b1 = vals(Eigen::Index(y));
        const double ma = std::abs(a1), mb = std::abs(b1);
        if (ma != mb) return ma > mb;
        if (a1.real() != b1.real()) return a1.real() > b1.real();
        return a1.imag() > b1.imag();
    });

    out.values.resize(n);
    out.vectors = CMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Index src = Eigen::Index(order[k]);
        out.values[k] = vals(src);
        Eigen::VectorXcd v = vecs.col(src);
        const double nv = v.norm();
        if (nv > 0) v /= nv;
        // Phase: first component of (near-)maximal modulus becomes real positive.
        double vmax = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) vmax = std::max(vmax, std::abs(v(i)));
        Eigen::Index pivot = 0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (std::abs(v(i)) >= vmax * (1.0 - 1e-10)) {
                pivot = i;
                break;
            }
        }
        if (std::abs(v(pivot)) > 0) v *= std::conj(v(pivot)) / std::abs(v(pivot));
        v(pivot) = cdouble(v(pivot).real(), 0.0);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(Eigen::Index(i));
    }
    return out;
}

double rcond_c(const CMatrix& a) {
    require_square(a.rows(), a.cols(), "rcond_c");
    if (a.rows() == 0) return 1.0;
    Eigen::MatrixXcd m = view(a);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (lu.matrixLU()(i, i) == cdouble(0.0)) return 0.0;
    const double r = lu.rcond();
    return std::isfinite(r) ? r : 0.0;
}

CMatrix solve_c(const CMatrix& a, const CMatrix& b) {
    require_square(a.rows(), a.cols(), "solve_c");
    if (a.rows() != b.rows()) {
        throw DimensionError("solve_c: " + shape(a.rows(), a.cols()) + " vs rhs " + shape(b.rows(), b.cols()));
    }
    if (a.rows() == 0) return CMatrix(0, b.cols());
    Eigen::MatrixXcd m = view(a);
    Eigen::MatrixXcd rhs = view(b);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
    bool zero_pivot = false;
    for (Eigen::Index i = 0; i < m.rows(); ++i) zero_pivot |= lu.matrixLU()(i, i) == cdouble(0.0);
    const double rc = zero_pivot ? 0.0 : lu.rcond();
    constexpr double kMinRcond = 1e-14;
    if (!(rc >= kMinRcond)) {
        std::ostringstream os;
        os << "solve_c: matrix is singular to working precision (rcond estimate " << rc << ")";
        throw NumericError(os.str());
    }
    Eigen::MatrixXcd x = lu.solve(rhs);
    const Eigen::MatrixXcd r = rhs - m * x;
    x += lu.solve(r);
    CMatrix out(b.rows(), b.cols());
    view(out) = x;
    return out;
}

CMatrix inverse_c(const CMatrix& a) {
    return solve_c(a, CMatrix::identity(a.rows()));
}

Matrix semi_orthogonal(std::size_t d, std::size_t n, std::uint64_t seed) {
    if (d < n) throw DimensionError("semi_orthogonal: need d >= n, got d=" + std::to_string(d) + ", n=" + std::to_string(n));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Fill row-major so the draw order is independent of Eigen's storage order.
    Matrix g(d, n);
    for (double& x : g.flat()) x = gauss(rng);
    Eigen::MatrixXd gm = view(g);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gm);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(Eigen::Index(d), Eigen::Index(n));
    const Eigen::MatrixXd& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < Eigen::Index(n); ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    return from_eigen(q);
}

Matrix expm(const Matrix& a) {
    require_square(a.rows(), a.cols(), "expm");
    const Eigen::Index n = Eigen::Index(a.rows());
    if (n == 0) return Matrix();
    if (!all_finite(a)) throw NumericError("expm: non-finite input");

    static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                   1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                   670442572800.0,      33522128640.0,       1323241920.0,
                                   40840800.0,          960960.0,            16380.0,
                                   182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;

    Eigen::MatrixXd A = view(a);
    const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > theta13) s = int(std::ceil(std::log2(norm1 / theta13)));
    if (s > 1000) throw NumericError("expm: norm too large (1-norm " + std::to_string(norm1) + ")");
    if (s > 0) A /= std::ldexp(1.0, s);

    // Coefficients normalized by b[0] keep LU pivots near 1, so that zero and
    // nilpotent inputs come out exact.
    double c[14];
    for (int k = 0; k < 14; ++k) c[k] = b[k] / b[0];
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd A2 = A * A;
    const Eigen::MatrixXd A4 = A2 * A2;
    const Eigen::MatrixXd A6 = A4 * A2;
    const Eigen::MatrixXd Uin = A6 * (c[13] * A6 + c[11] * A4 + c[9] * A2) + c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * I;
    const Eigen::MatrixXd U = A * Uin;
    const Eigen::MatrixXd V = A6 * (c[12] * A6 + c[10] * A4 + c[8] * A2) + c[6] * A6 + c[4] * A4 + c[2] * A2 + I;
    Eigen::MatrixXd R = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < s; ++k) R = R * R;
    Matrix out = from_eigen(R);
    if (!all_finite(out)) throw NumericError("expm: overflow (1-norm " + std::to_string(norm1) + ")");
    return out;
}

Matrix expm_frechet_adjoint(const Matrix& a, const Matrix& g) {
    require_square(a.rows(), a.cols(), "expm_frechet_adjoint");
    if (!a.same_shape(g)) throw DimensionError("expm_frechet_adjoint: direction shape mismatch");
    const std::size_t n = a.rows();
    // expm([[X, E], [0, X]]) has L(X, E) in its upper-right block.
    Matrix block(2 * n, 2 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            block(i, j) = a(j, i);
            block(n + i, n + j) = a(j, i);
            block(i, n + j) = g(i, j);
        }
    const Matrix e = expm(block);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = e(i, n + j);
    return out;
}

Matrix tridiag_solve(std::span<const double> lower, std::span<const double> diag, std::span<const double> upper,
                     const Matrix& rhs) {
    const std::size_t n = diag.size();
    if (n == 0) throw DimensionError("tridiag_solve: empty system");
    if (lower.size() + 1 != n || upper.size() + 1 != n) {
        throw DimensionError("tridiag_solve: off-diagonals must have n-1 entries");
    }
    if (rhs.rows() != n) throw DimensionError("tridiag_solve: rhs has " + std::to_string(rhs.rows()) + " rows, expected " + std::to_string(n));

    const std::size_t k = rhs.cols();
    Matrix x = rhs;
    std::vector<double> c(n);
    auto check_pivot = [&](double piv, std::size_t i) {
        const double scale = std::abs(diag[i]) + (i > 0 ? std::abs(lower[i - 1]) : 0.0) + (i + 1 < n ? std::abs(upper[i]) : 0.0);
        if (piv == 0.0 || std::abs(piv) <= 1e-15 * scale) {
            throw NumericError("tridiag_solve: zero pivot at row " + std::to_string(i));
        }
    };
    double piv = diag[0];
    check_pivot(piv, 0);
    c[0] = n > 1 ? upper[0] / piv : 0.0;
    for (std::size_t j = 0; j < k; ++j) x(0, j) /= piv;
    for (std::size_t i = 1; i < n; ++i) {
        piv = diag[i] - lower[i - 1] * c[i - 1];
        check_pivot(piv, i);
        c[i] = i + 1 < n ? upper[i] / piv : 0.0;
        auto xi = x.row(i);
        auto xp = x.row(i - 1);
        for (std::size_t j = 0; j < k; ++j) xi[j] = (xi[j] - lower[i - 1] * xp[j]) / piv;
    }
    for (std::size_t i = n - 1; i-- > 0;) {
        auto xi = x.row(i);
        auto xn = x.row(i + 1);
        for (std::size_t j = 0; j < k; ++j) xi[j] -= c[i] * xn[j];
    }
    return x;
}

struct PoissonSolver::Impl {
    std::size_t ny, nx;
    double dx, dy;
    std::vector<double> buf;
    std::vector<double> inv_eig;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    Impl(std::size_t ny_, std::size_t nx_, double dx_, double dy_)
        : ny(ny_), nx(nx_), dx(dx_), dy(dy_), buf(ny_ * nx_), inv_eig(ny_ * nx_) {
        constexpr double pi = 3.14159265358979323846;
        for (std::size_t j = 0; j < ny; ++j) {
            const double sy = std::sin(pi * double(j) / (2.0 * double(ny)));
            const double ly = -4.0 * sy * sy / (dy * dy);
            for (std::size_t i = 0; i < nx; ++i) {
                const double sx = std::sin(pi * double(i) / (2.0 * double(nx)));
                const double lx = -4.0 * sx * sx / (dx * dx);
                const double lam = lx + ly;
                // Zero mode fixes the additive constant; normalization of the
                // REDFT10/REDFT01 pair is folded in here.
                inv_eig[j * nx + i] = (i == 0 && j == 0) ? 0.0 : 1.0 / (lam * 4.0 * double(nx) * double(ny));
            }
        }
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward = fftw_plan_r2r_2d(int(ny), int(nx), buf.data(), buf.data(), FFTW_REDFT10, FFTW_REDFT10, FFTW_ESTIMATE);
        backward = fftw_plan_r2r_2d(int(ny), int(nx), buf.data(), buf.data(), FFTW_REDFT01, FFTW_REDFT01, FFTW_ESTIMATE);
        if (!forward || !backward) throw NumericError("PoissonSolver: FFTW planning failed");
    }
    ~Impl() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
    }
};

PoissonSolver::PoissonSolver(std::size_t ny, std::size_t nx, double dx, double dy) {
    if (ny < 4 || nx < 4) throw DimensionError("PoissonSolver: grid must be at least 4x4, got " + shape(ny, nx));
    if (!(dx > 0) || !(dy > 0)) throw ConfigError("PoissonSolver: spacings must be positive");
    impl_ = std::make_unique<Impl>(ny, nx, dx, dy);
}

PoissonSolver::~PoissonSolver() = default;
PoissonSolver::PoissonSolver(PoissonSolver&&) noexcept = default;
PoissonSolver& PoissonSolver::operator=(PoissonSolver&&) noexcept = default;

std::size_t PoissonSolver::ny() const noexcept { return impl_->ny; }
std::size_t PoissonSolver::nx() const noexcept { return impl_->nx; }

Matrix PoissonSolver::solve(const Matrix& rhs) {
    Impl& s = *impl_;
    if (rhs.rows() != s.ny || rhs.cols() != s.nx) {
        throw DimensionError("PoissonSolver: rhs " + shape(rhs.rows(), rhs.cols()) + " vs grid " + shape(s.ny, s.nx));
    }
    const double mean = sum(rhs) / double(rhs.size());
    const double scale = std::max(max_abs(rhs), 1e-300);
    if (std::abs(mean) > 1e-10 * scale) {
        std::ostringstream os;
        os << "dct2_poisson: rhs mean " << mean << " violates the Neumann compatibility condition; projecting it out";
        warn(os.str());
    }
    std::copy(rhs.data(), rhs.data() + rhs.size(), s.buf.begin());
    fftw_execute(s.forward);
    for (std::size_t k = 0; k < s.buf.size(); ++k) s.buf[k] *= s.inv_eig[k];
    fftw_execute(s.backward);
    Matrix p(s.ny, s.nx, std::vector<double>(s.buf));
    const double pm = sum(p) / double(p.size());
    for (double& x : p.flat()) x -= pm;
    return p;
}

Matrix dct2_poisson(const Matrix& rhs, double dx, double dy) {
    PoissonSolver solver(rhs.rows(), rhs.cols(), dx, dy);
    return solver.solve(rhs);
}

}  // namespace flowmixer::linalg
