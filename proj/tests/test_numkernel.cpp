#include <gtest/gtest.h>

#include <numbers>

#include "nci/nci.hpp"
#include "oracles.hpp"

using namespace nci;

namespace {

HermitianMatrix random_hermitian(Rng& rng, std::size_t n) {
    HermitianMatrix h(n);
    for (std::size_t i = 0; i < n; ++i) {
        h.set_diagonal(i, rng.uniform(-3.0, 3.0));
        for (std::size_t j = i + 1; j < n; ++j) h.set_upper(i, j, {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    }
    return h;
}

oracle::CMat to_oracle(const CMatrix& a) {
    oracle::CMat m(a.rows(), std::vector<Complex>(a.cols()));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m[i][j] = a(i, j);
    return m;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

} // namespace

TEST(Eigh, DiagonalInputIsSortedPermutation) {
    HermitianMatrix h(3);
    h.set_diagonal(0, 3.0);
    h.set_diagonal(1, 1.0);
    h.set_diagonal(2, 2.0);
    const auto e = eigh(h);
    EXPECT_EQ(e.eigenvalues, (Vector{1.0, 2.0, 3.0}));
    const std::size_t source[3] = {1, 2, 0};
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(e.eigenvectors(i, k)), i == source[k] ? 1.0 : 0.0, 1e-15);
}

TEST(Eigh, TwoByTwoRealMatchesQuadraticFormula) {
    HermitianMatrix h(2);
    h.set_diagonal(0, 2.0);
    h.set_diagonal(1, 3.0);
    h.set_upper(0, 1, 1.0);
    const auto e = eigh(h);
    EXPECT_NEAR(e.eigenvalues[0], (5.0 - std::sqrt(5.0)) / 2.0, 1e-14);
    EXPECT_NEAR(e.eigenvalues[1], (5.0 + std::sqrt(5.0)) / 2.0, 1e-14);
    EXPECT_NEAR(e.eigenvalues[0], 1.381966, 1e-6);
    EXPECT_NEAR(e.eigenvalues[1], 3.618034, 1e-6);
}

TEST(Eigh, PauliY) {
    HermitianMatrix h(2);
    h.set_upper(0, 1, Complex(0.0, 1.0));
    const auto e = eigh(h);
    EXPECT_NEAR(e.eigenvalues[0], -1.0, 1e-15);
    EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-15);
}

TEST(Eigh, RandomResidualsOrthonormalityAndCharpolyOracle) {
    Rng rng(20260101);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 6);
        const HermitianMatrix h = random_hermitian(rng, n);
        const CMatrix a = h.to_complex();
        const auto e = eigh(h);
        const double anorm = frobenius_norm(a);
        for (std::size_t k = 0; k < n; ++k) {
            if (k > 0) {
                EXPECT_LE(e.eigenvalues[k - 1], e.eigenvalues[k]);
            }
            double res = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                Complex s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += a(i, j) * e.eigenvectors(j, k);
                res += std::norm(s - e.eigenvalues[k] * e.eigenvectors(i, k));
            }
            EXPECT_LE(std::sqrt(res), 1e-10 * anorm) << "trial " << trial;
            for (std::size_t l = 0; l < n; ++l) {
                Complex ip = 0.0;
                for (std::size_t i = 0; i < n; ++i) ip += std::conj(e.eigenvectors(i, k)) * e.eigenvectors(i, l);
                EXPECT_NEAR(std::abs(ip - (k == l ? 1.0 : 0.0)), 0.0, 1e-12);
            }
        }
        if (n <= 3) {
            const auto ref = oracle::hermitian_eigenvalues(to_oracle(a));
            ASSERT_EQ(ref.size(), n) << "trial " << trial;
            for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(e.eigenvalues[k], ref[k], 1e-9) << "trial " << trial;
        }
    }
}

TEST(Eigh, Deterministic) {
    Rng rng(5);
    const auto h = random_hermitian(rng, 5);
    const auto a = eigh(h), b = eigh(h);
    EXPECT_EQ(a.eigenvalues, b.eigenvalues);
    EXPECT_EQ(a.eigenvectors, b.eigenvectors);
}

TEST(HermitianMatrixEncoding, CoordinatesRoundTrip) {
    Rng rng(3);
    const auto h = random_hermitian(rng, 4);
    const auto back = HermitianMatrix::from_coordinates(4, h.to_coordinates());
    EXPECT_EQ(back.to_complex(), h.to_complex());
    const CMatrix a = h.to_complex();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a(i, j), std::conj(a(j, i)));
    EXPECT_THROW(HermitianMatrix(0), InvalidArgument);
}

TEST(NumericalRank, Examples) {
    EXPECT_EQ(numerical_rank(Matrix::identity(3)), 3);
    const Vector v{0.3, -1.2, 2.5};
    Matrix m(3, 2);
    m.set_column(0, v);
    m.set_column(1, axpy(1.0, v, v));
    EXPECT_EQ(numerical_rank(m), 1);
    EXPECT_EQ(numerical_rank(Matrix(4, 3, 0.0)), 0);
}

TEST(NumericalRank, PermutationAndScaleInvariance) {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t r = 3 + trial % 4, c = 2 + trial % 3, k = 1 + trial % 2;
        // product of r x k and k x c has rank k
        const Matrix m = random_matrix(rng, r, k) * random_matrix(rng, k, c);
        const int base = numerical_rank(m);
        EXPECT_EQ(base, static_cast<int>(k));
        Matrix perm(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) perm(i, j) = m((i + 1) % r, (j + 2) % c);
        EXPECT_EQ(numerical_rank(perm), base);
        for (double s : {1e-6, -3.0, 1e6}) {
            Matrix scaled = m;
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) scaled(i, j) *= s;
            EXPECT_EQ(numerical_rank(scaled), base) << "scale " << s;
        }
    }
}

TEST(NumericalRank, CentralForceDifferentialsAtSeededPoint) {
    const auto b = make_system("central-force");
    const auto x = draw_samples(b.chart, b.plan.with_seed(42).with_count(1), "rank-example").front();
    Matrix df(6, 4);
    oracle::RMat rows(6, std::vector<double>(4));
    for (std::size_t j = 0; j < 4; ++j) {
        const Vector g = b.family->fields[j].gradient(x);
        df.set_column(j, g);
        for (std::size_t i = 0; i < 6; ++i) rows[i][j] = g[i];
    }
    EXPECT_EQ(numerical_rank(df), 4);
    EXPECT_EQ(oracle::elimination_rank(rows, 1e-8), 4);
}

TEST(Integrate, ZeroField) {
    const VectorFieldFn zero = [](const Vector& x) { return Vector(x.size(), 0.0); };
    const Vector x0{0.4, -2.0, 7.0};
    EXPECT_EQ(integrate(zero, x0, 5.0, {false, false, false}), x0);
}

TEST(Integrate, RotationReturnsAfterTwoPi) {
    const VectorFieldFn rot = [](const Vector& x) { return Vector{x[1], -x[0]}; };
    const Vector x = integrate(rot, {1.0, 0.0}, 2.0 * std::numbers::pi, {false, false});
    EXPECT_NEAR(x[0], 1.0, 1e-9);
    EXPECT_NEAR(x[1], 0.0, 1e-9);
    const Vector y = integrate(rot, {1.0, 0.0}, 1.0, {false, false});
    EXPECT_NEAR(y[0], std::cos(1.0), 1e-9);
    EXPECT_NEAR(y[1], -std::sin(1.0), 1e-9);
}

TEST(Integrate, RotationConservesRadiusOverTwentyPi) {
    const VectorFieldFn rot = [](const Vector& x) { return Vector{x[1], -x[0]}; };
    Vector x{1.0, 0.0};
    for (int k = 0; k < 40; ++k) {
        x = integrate_unwrapped(rot, x, std::numbers::pi / 2.0);
        EXPECT_NEAR(x[0] * x[0] + x[1] * x[1], 1.0, 1e-8);
    }
}

TEST(Integrate, PeriodicCoordinateWrapsOnOutput) {
    const VectorFieldFn unit = [](const Vector&) { return Vector{1.0}; };
    EXPECT_NEAR(integrate(unit, {0.9}, 0.25, {true})[0], 0.15, 1e-12);
    EXPECT_NEAR(integrate_unwrapped(unit, {0.9}, 0.25)[0], 1.15, 1e-12);
    EXPECT_NEAR(integrate(unit, {0.1}, -0.25, {true})[0], 0.85, 1e-12);
}

TEST(Integrate, BlowupAndStepLimit) {
    const VectorFieldFn riccati = [](const Vector& x) { return Vector{x[0] * x[0]}; };
    try {
        integrate_unwrapped(riccati, {1.0}, 2.0);
        FAIL() << "expected blow-up";
    } catch (const IntegrationError& e) {
        EXPECT_EQ(e.kind(), IntegrationError::Kind::Blowup);
        EXPECT_LT(e.last_valid_time(), 1.0);
        EXPECT_GT(e.last_valid_time(), 0.9);
    }
    OdeSettings tight;
    tight.max_steps = 3;
    const VectorFieldFn rot = [](const Vector& x) { return Vector{x[1], -x[0]}; };
    try {
        integrate_unwrapped(rot, {1.0, 0.0}, 10.0, tight);
        FAIL() << "expected step limit";
    } catch (const IntegrationError& e) {
        EXPECT_EQ(e.kind(), IntegrationError::Kind::StepLimit);
    }
    OdeSettings bad;
    bad.rtol = 0.0;
    EXPECT_THROW(integrate_unwrapped(rot, {1.0, 0.0}, 1.0, bad), InvalidArgument);
    const VectorFieldFn nan_field = [](const Vector&) { return Vector{std::nan("")}; };
    EXPECT_THROW(integrate_unwrapped(nan_field, {0.0}, 1.0), IntegrationError);
}

TEST(LatticeReduce, Examples) {
    EXPECT_EQ(lattice_reduce(Matrix::identity(2)), Matrix::identity(2));
    const Matrix sheared = Matrix::from_columns({{1.0, 0.0}, {5.0, 1.0}});
    const Matrix red = lattice_reduce(sheared);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(red(i, j), i == j ? 1.0 : 0.0, 1e-15);
    const Matrix two = lattice_reduce(Matrix::from_columns({{2.0, 0.0}, {1.0, 1.0}}));
    EXPECT_NEAR(std::abs(determinant(two)), 2.0, 1e-12);
}

TEST(LatticeReduce, SameLatticeUnimodular) {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t r = 2 + trial % 3;
        Matrix b = random_matrix(rng, r, r);
        for (std::size_t i = 0; i < r; ++i) b(i, i) += 2.0;
        // scramble with a random unimodular matrix (product of shears)
        Matrix u = Matrix::identity(r);
        for (int k = 0; k < 6; ++k) {
            const std::size_t i = static_cast<std::size_t>(rng.uniform() * r), j = (i + 1) % r;
            const double q = std::round(rng.uniform(-3.0, 3.0));
            for (std::size_t row = 0; row < r; ++row) u(row, j) += q * u(row, i);
        }
        const Matrix scrambled = b * u;
        const Matrix red = lattice_reduce(scrambled);
        EXPECT_NEAR(std::abs(determinant(red)) / std::abs(determinant(b)), 1.0, 1e-9);
        const Matrix t = inverse(scrambled) * red;
        for (double v : t.data()) EXPECT_NEAR(v, std::round(v), 1e-9);
        EXPECT_NEAR(std::abs(determinant(t)), 1.0, 1e-9);
    }
}

TEST(LatticeReduce, DegenerateIsError) {
    EXPECT_THROW(lattice_reduce(Matrix::from_columns({{1.0, 2.0}, {2.0, 4.0}})), LatticeError);
    EXPECT_THROW(lattice_reduce(Matrix(2, 2, 0.0)), LatticeError);
    EXPECT_THROW(lattice_reduce(Matrix::identity(5)), InvalidArgument);
}

TEST(Rng, SubstreamsAreIndependentOfOrder) {
    Rng a = Rng::substream(7, "jacobi");
    Rng b = Rng::substream(7, "involution");
    Rng a2 = Rng::substream(7, "jacobi");
    const double first = a.uniform();
    b.uniform();
    EXPECT_EQ(first, a2.uniform());
    EXPECT_NE(Rng::substream(8, "jacobi").uniform(), first);
    for (int k = 0; k < 1000; ++k) {
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}
