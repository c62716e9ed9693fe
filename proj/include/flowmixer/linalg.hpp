#pragma once

// Dense real/complex matrix kernels shared by the model, spectral and CFD code.
//
// Storage is row-major. The vec() convention is column-major stacking, so that
// vec(B X A^T) == kron(A, B) vec(X).

#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "flowmixer/error.hpp"

namespace flowmixer::linalg {

using cdouble = std::complex<double>;

template <class T>
class BasicMatrix {
public:
    using value_type = T;

    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("matrix data length does not match shape");
        }
    }
    BasicMatrix(std::initializer_list<std::initializer_list<T>> rows);

    static BasicMatrix zeros(std::size_t rows, std::size_t cols) { return BasicMatrix(rows, cols); }
    static BasicMatrix identity(std::size_t n) {
        BasicMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> flat() noexcept { return data_; }
    std::span<const T> flat() const noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const BasicMatrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    BasicMatrix& operator+=(const BasicMatrix& o);
    BasicMatrix& operator-=(const BasicMatrix& o);
    BasicMatrix& operator*=(T s) {
        for (auto& x : data_) x *= s;
        return *this;
    }

    friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using CMatrix = BasicMatrix<cdouble>;

template <class T>
BasicMatrix<T> operator+(BasicMatrix<T> a, const BasicMatrix<T>& b) { return a += b; }
template <class T>
BasicMatrix<T> operator-(BasicMatrix<T> a, const BasicMatrix<T>& b) { return a -= b; }
template <class T>
BasicMatrix<T> operator*(BasicMatrix<T> a, T s) { return a *= s; }
template <class T>
BasicMatrix<T> operator*(T s, BasicMatrix<T> a) { return a *= s; }

/// Right eigenpairs of a square real matrix. Column k of `vectors` belongs to values[k].
struct EigPair {
    std::vector<cdouble> values;
    CMatrix vectors;
};

Matrix matmul(const Matrix& a, const Matrix& b);
CMatrix matmul(const CMatrix& a, const CMatrix& b);
/// a^T b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
/// Plain (non-conjugating) transpose.
CMatrix transpose(const CMatrix& a);

Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix kron(const Matrix& a, const Matrix& b);

CMatrix to_complex(const Matrix& a);
Matrix real_part(const CMatrix& a);
Matrix imag_part(const CMatrix& a);

/// Column-major stacking into an (rows*cols) x 1 matrix.
Matrix vec(const Matrix& a);
/// Inverse of vec().
Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols);

/// Maximum absolute row sum.
double norm_inf(const Matrix& a);
double norm_inf(const CMatrix& a);
double max_abs(const Matrix& a);
double max_abs(const CMatrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius(const Matrix& a);
double trace(const Matrix& a);
double sum(const Matrix& a);
bool all_finite(const Matrix& a);

/// General real eigendecomposition (Hessenberg QR). Eigenvalues are sorted by
/// descending modulus, ties broken by descending real then imaginary part.
/// Every eigenvector has unit Euclidean norm and its largest component is real
/// and positive.
EigPair eig_general(const Matrix& a);

/// Solves a x = b with partial pivoting and one refinement step.
/// Throws NumericError when a is singular to working precision.
CMatrix solve_c(const CMatrix& a, const CMatrix& b);
CMatrix inverse_c(const CMatrix& a);
/// Reciprocal condition estimate in the 1-norm.
double rcond_c(const CMatrix& a);

/// d x n matrix U with U^T U = I_n, from the QR factorization of a seeded
/// standard-normal matrix (R diagonal made nonnegative).
Matrix semi_orthogonal(std::size_t d, std::size_t n, std::uint64_t seed);

/// Matrix exponential: scaling and squaring with the degree-13 Pade approximant.
Matrix expm(const Matrix& a);

/// Adjoint of the Frechet derivative of expm at a, applied to g:
/// returns L(a^T, g), so that <g, L(a, e)> == <expm_frechet_adjoint(a, g), e>.
Matrix expm_frechet_adjoint(const Matrix& a, const Matrix& g);

/// Thomas algorithm for a tridiagonal system applied to every column of rhs.
/// lower and upper have n-1 entries, diag has n.
Matrix tridiag_solve(std::span<const double> lower, std::span<const double> diag,
                     std::span<const double> upper, const Matrix& rhs);

/// Solves the 5-point Laplacian  lap(p) = rhs  on a cell-centred grid with
/// homogeneous Neumann boundaries, via the type-II cosine transform. The
/// result has zero mean. A rhs with nonzero mean triggers a warning and the
/// mean is projected out.
Matrix dct2_poisson(const Matrix& rhs, double dx, double dy);

/// Reusable cosine-transform Poisson solver for a fixed grid.
class PoissonSolver {
public:
    PoissonSolver(std::size_t ny, std::size_t nx, double dx, double dy);
    ~PoissonSolver();
    PoissonSolver(const PoissonSolver&) = delete;
    PoissonSolver& operator=(const PoissonSolver&) = delete;
    PoissonSolver(PoissonSolver&&) noexcept;
    PoissonSolver& operator=(PoissonSolver&&) noexcept;

    Matrix solve(const Matrix& rhs);

    std::size_t ny() const noexcept;
    std::size_t nx() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

template <class T>
BasicMatrix<T>::BasicMatrix(std::initializer_list<std::initializer_list<T>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

template <class T>
BasicMatrix<T>& BasicMatrix<T>::operator+=(const BasicMatrix& o) {
    if (!same_shape(o)) throw DimensionError("matrix addition: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

template <class T>
BasicMatrix<T>& BasicMatrix<T>::operator-=(const BasicMatrix& o) {
    if (!same_shape(o)) throw DimensionError("matrix subtraction: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

}  // namespace flowmixer::linalg
