// Small dense vectors and matrices. Sizes here never exceed a few dozen,
// so everything is row-major std::vector storage with no expression templates.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "nci/errors.hpp"

namespace nci {

using Vector = std::vector<double>;
using Complex = std::complex<double>;

template <typename T>
class DenseMatrix {
  public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    static DenseMatrix from_columns(const std::vector<std::vector<T>>& columns) {
        if (columns.empty()) return {};
        DenseMatrix m(columns.front().size(), columns.size());
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (columns[j].size() != m.rows_) throw InvalidArgument("from_columns: ragged columns");
            for (std::size_t i = 0; i < m.rows_; ++i) m(i, j) = columns[j][i];
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::vector<T> column(std::size_t j) const {
        std::vector<T> c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }

    void set_column(std::size_t j, const std::vector<T>& c) {
        for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
    }

    DenseMatrix transpose() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    const std::vector<T>& data() const noexcept { return data_; }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = DenseMatrix<double>;
using CMatrix = DenseMatrix<Complex>;

template <typename T>
DenseMatrix<T> operator*(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
    if (a.cols() != b.rows()) throw InvalidArgument("matrix product: shape mismatch");
    DenseMatrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

template <typename T>
std::vector<T> operator*(const DenseMatrix<T>& a, const std::vector<T>& x) {
    if (a.cols() != x.size()) throw InvalidArgument("matrix-vector product: shape mismatch");
    std::vector<T> y(a.rows(), T{});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
    return y;
}

inline CMatrix adjoint(const CMatrix& a) {
    CMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = std::conj(a(i, j));
    return t;
}

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Vector& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline Vector axpy(double alpha, const Vector& x, const Vector& y) {
    Vector r(y);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += alpha * x[i];
    return r;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double frobenius_norm(const CMatrix& a) {
    double s = 0.0;
    for (const Complex& v : a.data()) s += std::norm(v);
    return std::sqrt(s);
}

namespace detail {

// LU with partial pivoting; returns false when a pivot underflows `tiny`.
inline bool lu_decompose(Matrix& a, std::vector<std::size_t>& perm, int& sign, double tiny) {
    const std::size_t n = a.rows();
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    sign = 1;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (std::abs(a(piv, k)) <= tiny) return false;
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(perm[k], perm[piv]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= a(i, k) * a(k, j);
        }
    }
    return true;
}

} // namespace detail

inline double determinant(const Matrix& m) {
    if (m.rows() != m.cols()) throw InvalidArgument("determinant: matrix not square");
    Matrix a = m;
    std::vector<std::size_t> perm;
    int sign = 1;
    if (!detail::lu_decompose(a, perm, sign, 0.0)) return 0.0;
    double det = sign;
    for (std::size_t i = 0; i < a.rows(); ++i) det *= a(i, i);
    return det;
}

/// Solves A x = b; throws InvalidArgument when A is numerically singular.
inline Vector solve(const Matrix& m, const Vector& b) {
    if (m.rows() != m.cols() || m.rows() != b.size()) throw InvalidArgument("solve: shape mismatch");
    Matrix a = m;
    std::vector<std::size_t> perm;
    int sign = 1;
    const double scale = std::max(1e-300, frobenius_norm(m));
    if (!detail::lu_decompose(a, perm, sign, 1e-14 * scale)) throw InvalidArgument("solve: singular matrix");
    const std::size_t n = a.rows();
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[perm[i]];
        for (std::size_t j = 0; j < i; ++j) s -= a(i, j) * x[j];
        x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

inline Matrix inverse(const Matrix& m) {
    const std::size_t n = m.rows();
    Matrix inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        Vector e(n, 0.0);
        e[j] = 1.0;
        inv.set_column(j, solve(m, e));
    }
    return inv;
}

} // namespace nci
