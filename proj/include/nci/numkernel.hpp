// Dense numerical kernels: Jacobi eigensolvers, numerical rank, an embedded
// Dormand-Prince 5(4) integrator and small-dimension lattice reduction.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "nci/errors.hpp"
#include "nci/linalg.hpp"

namespace nci {

// ---------------------------------------------------------------------------
// Hermitian matrices
// ---------------------------------------------------------------------------

/// n x n Hermitian matrix stored as a real diagonal plus the strict upper
/// triangle (row-major over i < j). Reconstruction is Hermitian by construction.
class HermitianMatrix {
  public:
    explicit HermitianMatrix(std::size_t n)
        : n_(n), diag_(n, 0.0), upper_re_(n * (n - 1) / 2, 0.0), upper_im_(n * (n - 1) / 2, 0.0) {
        if (n == 0) throw InvalidArgument("HermitianMatrix: dimension must be >= 1");
    }

    /// Takes the diagonal real parts and the strict upper triangle of `a`.
    static HermitianMatrix from_complex(const CMatrix& a) {
        if (a.rows() != a.cols()) throw InvalidArgument("HermitianMatrix: non-square input");
        HermitianMatrix h(a.rows());
        for (std::size_t i = 0; i < h.n_; ++i) {
            h.diag_[i] = a(i, i).real();
            for (std::size_t j = i + 1; j < h.n_; ++j) {
                h.upper_re_[h.upper_index(i, j)] = a(i, j).real();
                h.upper_im_[h.upper_index(i, j)] = a(i, j).imag();
            }
        }
        return h;
    }

    /// Chart encoding: [d_1..d_n, re_12, im_12, re_13, im_13, ..., re_{n-1,n}, im_{n-1,n}].
    static HermitianMatrix from_coordinates(std::size_t n, const Vector& x) {
        if (x.size() != n * n) throw InvalidArgument("HermitianMatrix: coordinate vector has wrong length");
        HermitianMatrix h(n);
        for (std::size_t i = 0; i < n; ++i) h.diag_[i] = x[i];
        for (std::size_t k = 0; k < h.upper_re_.size(); ++k) {
            h.upper_re_[k] = x[n + 2 * k];
            h.upper_im_[k] = x[n + 2 * k + 1];
        }
        return h;
    }

    Vector to_coordinates() const {
        Vector x(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i) x[i] = diag_[i];
        for (std::size_t k = 0; k < upper_re_.size(); ++k) {
            x[n_ + 2 * k] = upper_re_[k];
            x[n_ + 2 * k + 1] = upper_im_[k];
        }
        return x;
    }

    CMatrix to_complex() const {
        CMatrix a(n_, n_);
        for (std::size_t i = 0; i < n_; ++i) {
            a(i, i) = diag_[i];
            for (std::size_t j = i + 1; j < n_; ++j) {
                const Complex v(upper_re_[upper_index(i, j)], upper_im_[upper_index(i, j)]);
                a(i, j) = v;
                a(j, i) = std::conj(v);
            }
        }
        return a;
    }

    std::size_t dimension() const noexcept { return n_; }
    double diagonal(std::size_t i) const { return diag_.at(i); }
    Complex upper(std::size_t i, std::size_t j) const {
        return {upper_re_.at(upper_index(i, j)), upper_im_.at(upper_index(i, j))};
    }
    void set_diagonal(std::size_t i, double v) { diag_.at(i) = v; }
    void set_upper(std::size_t i, std::size_t j, Complex v) {
        upper_re_.at(upper_index(i, j)) = v.real();
        upper_im_.at(upper_index(i, j)) = v.imag();
    }

    /// Index of (i, j), i < j, in the row-major strict upper triangle.
    std::size_t upper_index(std::size_t i, std::size_t j) const {
        if (!(i < j && j < n_)) throw InvalidArgument("HermitianMatrix: index outside strict upper triangle");
        return i * n_ - i * (i + 1) / 2 + (j - i - 1);
    }

  private:
    std::size_t n_;
    Vector diag_;
    Vector upper_re_;
    Vector upper_im_;
};

struct EigenDecomposition {
    Vector eigenvalues; ///< ascending
    CMatrix eigenvectors; ///< unitary, column k belongs to eigenvalue k
};

struct SymmetricEigenDecomposition {
    Vector eigenvalues; ///< ascending
    Matrix eigenvectors; ///< orthogonal, column k belongs to eigenvalue k
};

namespace detail {

inline double conj_if(double v) { return v; }
inline Complex conj_if(Complex v) { return std::conj(v); }
inline double real_part(double v) { return v; }
inline double real_part(Complex v) { return v.real(); }

constexpr int kJacobiSweepLimit = 30;

// Cyclic Jacobi on a self-adjoint matrix. Pivot order is row-major over p < q,
// which makes the result bit-reproducible for a given input.
template <typename T>
void jacobi_diagonalize(DenseMatrix<T>& a, DenseMatrix<T>& v) {
    const std::size_t n = a.rows();
    v = DenseMatrix<T>::identity(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) total += std::norm(a(i, j));
    total = std::sqrt(total);
    if (n == 1 || total == 0.0) return;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * std::norm(a(i, j));
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < kJacobiSweepLimit; ++sweep) {
        if (off_norm() <= 1e-15 * total) return;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const T apq = a(p, q);
                const double mag = std::abs(apq);
                if (mag == 0.0) continue;
                const double app = real_part(a(p, p));
                const double aqq = real_part(a(q, q));
                // Tiny off-diagonal relative to both diagonals: drop it.
                if (sweep > 3 && mag < 1e-18 * (std::abs(app) + std::abs(aqq))) {
                    a(p, q) = T{};
                    a(q, p) = T{};
                    continue;
                }
                const T phase = apq / mag; // e^{i alpha}
                const double tau = (aqq - app) / (2.0 * mag);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const T phase_c = conj_if(phase);
                // Columns: A <- A U with U = [[c, s], [-s e^{-i alpha}, c e^{-i alpha}]].
                for (std::size_t k = 0; k < n; ++k) {
                    const T akp = a(k, p);
                    const T akq = a(k, q);
                    a(k, p) = c * akp - s * phase_c * akq;
                    a(k, q) = s * akp + c * phase_c * akq;
                }
                // Rows: A <- U^* A.
                for (std::size_t k = 0; k < n; ++k) {
                    const T apk = a(p, k);
                    const T aqk = a(q, k);
                    a(p, k) = c * apk - s * phase * aqk;
                    a(q, k) = s * apk + c * phase * aqk;
                }
                a(p, q) = T{};
                a(q, p) = T{};
                a(p, p) = T{real_part(a(p, p))};
                a(q, q) = T{real_part(a(q, q))};
                for (std::size_t k = 0; k < n; ++k) {
                    const T vkp = v(k, p);
                    const T vkq = v(k, q);
                    v(k, p) = c * vkp - s * phase_c * vkq;
                    v(k, q) = s * vkp + c * phase_c * vkq;
                }
            }
        }
    }
    const double residual = off_norm();
    if (residual > 1e-15 * total)
        throw ConvergenceError("Jacobi eigensolver did not converge after " +
                                   std::to_string(kJacobiSweepLimit) + " sweeps (off-diagonal norm " +
                                   std::to_string(residual) + ")",
                               residual);
}

template <typename T>
void sort_ascending(DenseMatrix<T>& a, DenseMatrix<T>& v, Vector& values, DenseMatrix<T>& vectors) {
    const std::size_t n = a.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return real_part(a(i, i)) < real_part(a(j, j));
    });
    values.resize(n);
    vectors = DenseMatrix<T>(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        values[k] = real_part(a(order[k], order[k]));
        for (std::size_t i = 0; i < n; ++i) vectors(i, k) = v(i, order[k]);
    }
}

} // namespace detail

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
inline EigenDecomposition eigh(const HermitianMatrix& h) {
    CMatrix a = h.to_complex();
    CMatrix v;
    detail::jacobi_diagonalize(a, v);
    EigenDecomposition out;
    detail::sort_ascending(a, v, out.eigenvalues, out.eigenvectors);
    return out;
}

/// Same algorithm on a real symmetric matrix (the upper triangle is mirrored).
inline SymmetricEigenDecomposition eigh_symmetric(const Matrix& m) {
    if (m.rows() != m.cols()) throw InvalidArgument("eigh_symmetric: matrix not square");
    Matrix a = m;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) a(j, i) = a(i, j);
    Matrix v;
    detail::jacobi_diagonalize(a, v);
    SymmetricEigenDecomposition out;
    detail::sort_ascending(a, v, out.eigenvalues, out.eigenvectors);
    return out;
}

// ---------------------------------------------------------------------------
// Numerical rank
// ---------------------------------------------------------------------------

struct RankPolicy {
    double rel_tol = 1e-8;
};

/// Singular values in descending order. Computed as the non-negative spectrum
/// of the augmented matrix [[0, M], [M^T, 0]], which keeps small singular
/// values at absolute accuracy ~ eps * ||M||.
inline Vector singular_values(const Matrix& m) {
    const std::size_t r = m.rows();
    const std::size_t c = m.cols();
    const std::size_t k = std::min(r, c);
    if (k == 0) return {};
    for (double x : m.data())
        if (!std::isfinite(x)) throw InvalidArgument("singular_values: non-finite entry");
    Matrix aug(r + c, r + c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            aug(i, r + j) = m(i, j);
            aug(r + j, i) = m(i, j);
        }
    const Vector ev = eigh_symmetric(aug).eigenvalues;
    Vector sv(ev.end() - static_cast<std::ptrdiff_t>(k), ev.end());
    std::reverse(sv.begin(), sv.end());
    for (double& s : sv) s = std::max(0.0, s);
    return sv;
}

/// Count of singular values above rel_tol * max(1, sigma_max).
inline int numerical_rank(const Matrix& m, RankPolicy policy = {}) {
    const Vector sv = singular_values(m);
    if (sv.empty()) return 0;
    const double tau = policy.rel_tol * std::max(1.0, sv.front());
    int rank = 0;
    for (double s : sv)
        if (s > tau) ++rank;
    return rank;
}

// ---------------------------------------------------------------------------
// ODE integration
// ---------------------------------------------------------------------------

struct OdeSettings {
    double rtol = 1e-10;
    double atol = 1e-12;
    double max_step = 0.5;
    long max_steps = 2'000'000;

    void validate() const {
        if (!(rtol > 0.0) || !(atol > 0.0) || !(max_step > 0.0) || max_steps < 1)
            throw InvalidArgument("OdeSettings: tolerances and max_step must be > 0, max_steps >= 1");
    }
};

using VectorFieldFn = std::function<Vector(const Vector&)>;

/// Wraps a value into [0, 1).
inline double wrap_unit(double v) {
    double w = v - std::floor(v);
    if (w >= 1.0) w = 0.0;
    return w;
}

/// Integrates x' = vf(x) from x0 over time T (T may be negative) with the
/// Dormand-Prince 5(4) pair. The state is carried unwrapped; no wrapping is
/// applied to the result.
inline Vector integrate_unwrapped(const VectorFieldFn& vf, Vector x, double T, const OdeSettings& settings = {}) {
    settings.validate();
    if (!std::isfinite(T)) throw InvalidArgument("integrate: non-finite time");
    if (T == 0.0) return x;
    const std::size_t n = x.size();
    const double dir = T > 0.0 ? 1.0 : -1.0;
    const double span = std::abs(T);

    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    (void)c2; (void)c3; (void)c4; (void)c5;

    auto eval = [&](const Vector& y, double t_now) {
        Vector d = vf(y);
        if (d.size() != n) throw InvalidArgument("integrate: vector field returned wrong dimension");
        for (double v : d)
            if (!std::isfinite(v))
                throw IntegrationError("integrate: non-finite vector field", IntegrationError::Kind::Blowup, t_now);
        return d;
    };

    double t = 0.0;
    double h = std::min({settings.max_step, span, 1e-2});
    Vector k1 = eval(x, 0.0), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), tmp(n);
    long steps = 0;
    while (t < span) {
        if (++steps > settings.max_steps)
            throw IntegrationError("integrate: step budget exhausted", IntegrationError::Kind::StepLimit, dir * t);
        bool last = false;
        if (t + h >= span) {
            h = span - t;
            last = true;
        }
        const double hs = dir * h;
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + hs * a21 * k1[i];
        k2 = eval(tmp, dir * t);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + hs * (a31 * k1[i] + a32 * k2[i]);
        k3 = eval(tmp, dir * t);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        k4 = eval(tmp, dir * t);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = x[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        k5 = eval(tmp, dir * t);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = x[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        k6 = eval(tmp, dir * t);
        for (std::size_t i = 0; i < n; ++i)
            y[i] = x[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        k7 = eval(y, dir * t);

        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ei =
                hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double sc = settings.atol + settings.rtol * std::max(std::abs(x[i]), std::abs(y[i]));
            err += (ei / sc) * (ei / sc);
        }
        err = std::sqrt(err / static_cast<double>(std::max<std::size_t>(n, 1)));
        if (!std::isfinite(err))
            throw IntegrationError("integrate: trajectory blow-up", IntegrationError::Kind::Blowup, dir * t);

        if (err <= 1.0) {
            t = last ? span : t + h;
            x.swap(y);
            k1.swap(k7);
            const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            h = std::min(settings.max_step, h * fac);
        } else {
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
            if (h < 1e-14 * std::max(1.0, span))
                throw IntegrationError("integrate: step size underflow", IntegrationError::Kind::Blowup, dir * t);
        }
    }
    return x;
}

/// As integrate_unwrapped, then wraps coordinates flagged periodic into [0, 1).
inline Vector integrate(const VectorFieldFn& vf, const Vector& x0, double T, const std::vector<bool>& periodic,
                        const OdeSettings& settings = {}) {
    Vector x = integrate_unwrapped(vf, x0, T, settings);
    for (std::size_t i = 0; i < x.size() && i < periodic.size(); ++i)
        if (periodic[i]) x[i] = wrap_unit(x[i]);
    return x;
}

// ---------------------------------------------------------------------------
// Lattice reduction
// ---------------------------------------------------------------------------

namespace detail {

inline void normalize_column_sign(Matrix& b, std::size_t j) {
    double scale = 0.0;
    for (std::size_t i = 0; i < b.rows(); ++i) scale = std::max(scale, std::abs(b(i, j)));
    for (std::size_t i = 0; i < b.rows(); ++i) {
        if (std::abs(b(i, j)) > 1e-9 * scale) {
            if (b(i, j) < 0.0)
                for (std::size_t k = 0; k < b.rows(); ++k) b(k, j) = -b(k, j);
            return;
        }
    }
}

inline void lll(std::vector<Vector>& cols, double delta) {
    const std::size_t r = cols.size();
    auto gram_schmidt = [&](std::vector<Vector>& star, Matrix& mu) {
        star = cols;
        mu = Matrix(r, r, 0.0);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                mu(i, j) = dot(cols[i], star[j]) / dot(star[j], star[j]);
                star[i] = axpy(-mu(i, j), star[j], star[i]);
            }
        }
    };
    std::vector<Vector> star;
    Matrix mu;
    gram_schmidt(star, mu);
    std::size_t k = 1;
    int guard = 0;
    while (k < r) {
        if (++guard > 10000) throw ConvergenceError("lattice_reduce: LLL did not terminate", 0.0);
        for (std::size_t j = k; j-- > 0;) {
            const double q = std::round(mu(k, j));
            if (q != 0.0) {
                cols[k] = axpy(-q, cols[j], cols[k]);
                gram_schmidt(star, mu);
            }
        }
        const double lhs = dot(star[k], star[k]);
        const double rhs = (delta - mu(k, k - 1) * mu(k, k - 1)) * dot(star[k - 1], star[k - 1]);
        if (lhs >= rhs) {
            ++k;
        } else {
            std::swap(cols[k], cols[k - 1]);
            gram_schmidt(star, mu);
            k = std::max<std::size_t>(k - 1, 1);
        }
    }
}

} // namespace detail

/// Reduces the lattice basis given by the columns of `b` (r <= 4). Lagrange-Gauss
/// reduction for r = 2, LLL with delta = 0.99 for r = 3, 4. Each output column
/// has its first significant component positive.
inline Matrix lattice_reduce(const Matrix& b) {
    const std::size_t r = b.cols();
    if (r == 0 || b.rows() != r) throw InvalidArgument("lattice_reduce: basis must be square");
    if (r > 4) throw InvalidArgument("lattice_reduce: dimension above 4 not supported");
    double col_norm = 0.0;
    for (std::size_t j = 0; j < r; ++j) col_norm = std::max(col_norm, norm(b.column(j)));
    const double det = determinant(b);
    if (!(std::abs(det) >= 1e-9 * std::pow(col_norm, static_cast<double>(r))) || col_norm == 0.0)
        throw LatticeError("lattice_reduce: rank-deficient lattice basis (|det| = " + std::to_string(std::abs(det)) +
                           ")");

    std::vector<Vector> cols(r);
    for (std::size_t j = 0; j < r; ++j) cols[j] = b.column(j);

    if (r == 2) {
        if (dot(cols[0], cols[0]) > dot(cols[1], cols[1])) std::swap(cols[0], cols[1]);
        for (int guard = 0; guard < 1000; ++guard) {
            const double q = std::round(dot(cols[1], cols[0]) / dot(cols[0], cols[0]));
            cols[1] = axpy(-q, cols[0], cols[1]);
            if (dot(cols[1], cols[1]) >= dot(cols[0], cols[0])) break;
            std::swap(cols[0], cols[1]);
        }
    } else if (r > 2) {
        detail::lll(cols, 0.99);
    }

    Matrix out = Matrix::from_columns(cols);
    for (std::size_t j = 0; j < r; ++j) detail::normalize_column_sign(out, j);
    return out;
}

} // namespace nci
