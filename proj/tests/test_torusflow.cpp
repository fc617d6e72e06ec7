#include <gtest/gtest.h>

#include <numbers>

#include "nci/nci.hpp"
#include "oracles.hpp"

using namespace nci;

namespace {

constexpr double kPi = std::numbers::pi;

struct Plane {
    ChartPtr chart = Chart::make("plane", {"q", "p"});
    BivectorField pi = BivectorField::canonical("Pi", chart, {{0, 1}});
};

// One periodic and one flat direction: the lattice has rank 1 only.
struct HalfCompact {
    ChartPtr chart = Chart::make("half", {"th", "q", "a", "b"}, {true, false, false, false});
    BivectorField pi = BivectorField::canonical("Pi", chart, {{0, 2}, {1, 3}});
};

// T^{-1} S is an integer matrix of determinant +-1.
void expect_same_lattice(const Matrix& T, const Matrix& S, double tol) {
    const Matrix u = inverse(T) * S;
    for (std::size_t i = 0; i < u.rows(); ++i)
        for (std::size_t j = 0; j < u.cols(); ++j) EXPECT_NEAR(u(i, j), std::round(u(i, j)), tol);
    EXPECT_NEAR(std::abs(determinant(u)), 1.0, tol);
}

} // namespace

TEST(JointFlow, SemiLocalAdvancesAngles) {
    const auto b = make_system("canonical-semi");
    const auto x0 = b.lattice_point(1);
    const auto fields = b.lattice_fields();
    const auto x = joint_flow(b.pi, fields, {0.3, 0.85}, x0);
    EXPECT_NEAR(b.chart->difference(x.coords(), x0.coords())[0], 0.3, 1e-12);
    EXPECT_NEAR(b.chart->difference(x.coords(), x0.coords())[1], -0.15, 1e-12);
    for (std::size_t k = 2; k < x.dimension(); ++k) EXPECT_EQ(x[k], x0[k]);
    const auto same = joint_flow(b.pi, fields, {0.0, 0.0}, x0);
    EXPECT_EQ(same.coords(), x0.coords());
}

TEST(JointFlow, GelfandCetlinReturnsAfterUnitTime) {
    const auto b = make_gelfand_cetlin(2);
    const auto x0 = b.lattice_point(4);
    const auto x = joint_flow(b.pi, {b.field("mu_1_1")}, {1.0}, x0);
    EXPECT_LE(b.chart->distance(x.coords(), x0.coords()), 1e-6);
}

TEST(JointFlow, RequiresInvolution) {
    const auto b = make_central_force(1.0, "r^2/2");
    const auto x0 = draw_samples(b.chart, b.plan.with_count(1), "jf").front();
    EXPECT_THROW(joint_flow(b.pi, {b.field("mu12"), b.field("mu23")}, {0.1, 0.1}, x0), InvalidArgument);
    EXPECT_THROW(joint_flow(b.pi, {b.field("H")}, {0.1, 0.1}, x0), InvalidArgument);
}

TEST(JointFlow, OrderIndependentForCommutingFields) {
    const auto b = make_central_force(1.0, "r^2/2");
    for (const auto& x0 : draw_samples(b.chart, b.plan.with_count(5), "jf-order")) {
        const auto a = joint_flow(b.pi, {b.field("H"), b.field("L")}, {0.7, 0.4}, x0);
        const auto c = joint_flow(b.pi, {b.field("L"), b.field("H")}, {0.4, 0.7}, x0);
        EXPECT_LE(b.chart->distance(a.coords(), c.coords()), 1e-8);
    }
}

TEST(DetectPeriod, Examples) {
    const auto semi = make_system("canonical-semi");
    EXPECT_NEAR(detect_period(semi.pi, semi.field("p1"), semi.lattice_point(2)), 1.0, 1e-9);

    Plane pl;
    const auto osc = ScalarField::parse("h", pl.chart, "(q^2 + p^2)/2");
    EXPECT_NEAR(detect_period(pl.pi, osc, Point(pl.chart, {1.0, 0.0})), 2.0 * kPi, 1e-7);

    const auto gc = make_gelfand_cetlin(2);
    EXPECT_NEAR(detect_period(gc.pi, gc.field("mu_1_1"), gc.lattice_point(7)), 1.0, 1e-6);
}

TEST(DetectPeriod, ScalesInverselyWithTheHamiltonian) {
    Plane pl;
    const auto osc = ScalarField::parse("h", pl.chart, "(q^2 + p^2)/2");
    FlowProbe probe;
    probe.t_max = 20.0;
    const Point x0(pl.chart, {0.3, -0.8});
    const double base = detect_period(pl.pi, osc, x0, probe);
    for (double c : {2.0, 0.5}) EXPECT_NEAR(detect_period(pl.pi, scale(osc, c), x0, probe), base / c, 1e-7);
    EXPECT_NEAR(detect_period(pl.pi, scale(osc, -1.0), x0, probe), base, 1e-7);
}

TEST(DetectPeriod, NoReturn) {
    Plane pl;
    EXPECT_THROW(detect_period(pl.pi, ScalarField::coordinate(pl.chart, 1), Point(pl.chart, {0.0, 0.0})),
                 NoPeriodFound);
    const auto osc = ScalarField::parse("h", pl.chart, "(q^2 + p^2)/2");
    EXPECT_THROW(detect_period(pl.pi, osc, Point(pl.chart, {0.0, 0.0})), NoPeriodFound);
    FlowProbe short_probe;
    short_probe.t_max = 3.0;
    EXPECT_THROW(detect_period(pl.pi, osc, Point(pl.chart, {1.0, 0.0}), short_probe), NoPeriodFound);
    FlowProbe bad;
    bad.return_tol = 0.0;
    EXPECT_THROW(detect_period(pl.pi, osc, Point(pl.chart, {1.0, 0.0}), bad), InvalidArgument);
}

TEST(DetectLattice, SemiLocalIsIdentity) {
    for (int r = 1; r <= 3; ++r) {
        const auto b = make_canonical(r, r + 1, {}, true);
        const auto L = detect_lattice(b.pi, b.lattice_fields(), b.lattice_point(3));
        expect_same_lattice(L.T, Matrix::identity(static_cast<std::size_t>(r)), 1e-9);
        EXPECT_NEAR(L.det, 1.0, 1e-9);
        for (double res : L.residuals) EXPECT_LE(res, 1e-9);
        EXPECT_EQ(L.fields.size(), static_cast<std::size_t>(r));
    }
}

TEST(DetectLattice, CircleBundle) {
    const auto b = make_circle_bundle();
    const auto L = detect_lattice(b.pi, b.lattice_fields(), b.lattice_point(1));
    ASSERT_EQ(L.T.rows(), 1u);
    EXPECT_NEAR(std::abs(L.T(0, 0)), 1.0, 1e-9);
}

TEST(DetectLattice, GelfandCetlinHasPeriodOneAxes) {
    const auto b = make_gelfand_cetlin(2);
    const auto L = detect_lattice(b.pi, b.lattice_fields(), b.lattice_point(5));
    expect_same_lattice(L.T, Matrix::identity(1), 1e-6);
}

TEST(DetectLattice, IncompleteLatticeReportsPartialBasis) {
    HalfCompact h;
    const std::vector<ScalarField> fields{ScalarField::coordinate(h.chart, 2), ScalarField::coordinate(h.chart, 3)};
    FlowProbe probe;
    probe.t_max = 3.0;
    try {
        detect_lattice(h.pi, fields, Point(h.chart, {0.2, 0.0, 1.0, 1.0}), probe);
        FAIL() << "expected a lattice error";
    } catch (const LatticeError& e) {
        ASSERT_EQ(e.partial_basis().size(), 1u);
        const auto& v = e.partial_basis().front();
        EXPECT_NEAR(std::abs(v[0]), std::round(std::abs(v[0])), 1e-9);
        EXPECT_GE(std::abs(v[0]), 1.0 - 1e-9);
        EXPECT_NEAR(v[1], 0.0, 1e-9);
    }
}

class RigidBodyLattice : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        sys = new SystemBundle(make_system("euler-poinsot"));
        base = new LatticeBasis(detect_lattice(sys->pi, sys->lattice_fields(), sys->lattice_point(3)));
    }
    static void TearDownTestSuite() {
        delete base;
        delete sys;
    }
    static SystemBundle* sys;
    static LatticeBasis* base;
};

SystemBundle* RigidBodyLattice::sys = nullptr;
LatticeBasis* RigidBodyLattice::base = nullptr;

TEST_F(RigidBodyLattice, RankTwoWithSmallResiduals) {
    ASSERT_EQ(base->T.rows(), 2u);
    EXPECT_GT(base->det, 1e-3);
    for (double r : base->residuals) EXPECT_LE(r, 1e-6);
}

TEST_F(RigidBodyLattice, DeterminantIsAFiberInvariant) {
    const Point m(sys->chart, base->base);
    const auto fields = sys->lattice_fields();
    Rng rng(99);
    for (int k = 0; k < 2; ++k) {
        const Vector t{rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)};
        const auto other = joint_flow(sys->pi, fields, t, m);
        const auto L = detect_lattice(sys->pi, fields, other);
        EXPECT_LE(std::abs(L.det - base->det) / base->det, 1e-4) << L.det << " vs " << base->det;
        expect_same_lattice(base->T, L.T, 1e-4);
    }
}

TEST_F(RigidBodyLattice, PermutedFieldsGiveTheSameLattice) {
    auto fields = sys->lattice_fields();
    std::swap(fields[0], fields[1]);
    const auto L = detect_lattice(sys->pi, fields, Point(sys->chart, base->base));
    Matrix swapped(2, 2);
    for (std::size_t j = 0; j < 2; ++j) swapped(0, j) = L.T(1, j), swapped(1, j) = L.T(0, j);
    expect_same_lattice(base->T, swapped, 1e-4);
}

TEST_F(RigidBodyLattice, FlowAlongReturnsConservesTheFamily) {
    const Point m(sys->chart, base->base);
    const auto fields = sys->lattice_fields();
    for (std::size_t j = 0; j < 2; ++j) {
        const auto end = joint_flow(sys->pi, fields, base->T.column(j), m);
        for (const auto& f : sys->family->fields) EXPECT_LE(std::abs(f.value(end) - f.value(m)), 1e-7) << f.name();
    }
}

TEST(AngleRelations, SemiLocal) {
    const auto b = make_system("canonical-semi");
    const auto res = angle_relation_check(b.pi, b.actions, b.angles, b.plan.with_count(20), 1e-12);
    EXPECT_TRUE(res.check.pass);
    EXPECT_LE(res.check.max_residual, 1e-12);
    EXPECT_EQ(res.orientation, (std::vector<int>{1, 1}));
}

TEST(AngleRelations, TorusAlphaFailsByAlpha) {
    for (double alpha : {0.0, 0.25, 0.5}) {
        const auto b = make_torus_alpha(alpha);
        const auto res = angle_relation_check(b.pi, b.actions, b.angles, b.plan.with_count(10), 1e-8);
        EXPECT_NEAR(res.max_theta_theta, alpha, 1e-12);
        EXPECT_LE(res.max_delta, 1e-12);
        EXPECT_EQ(res.check.pass, alpha == 0.0);
    }
}

TEST(AngleRelations, GelfandCetlin) {
    const auto b = make_gelfand_cetlin(3);
    const auto res = angle_relation_check(b.pi, b.actions, b.angles, b.plan.with_seed(3).with_count(10), 1e-4);
    EXPECT_TRUE(res.check.pass) << res.check.max_residual;
    EXPECT_EQ(res.orientation.size(), 3u);
}

TEST(AngleRelations, Validation) {
    const auto b = make_system("canonical-semi");
    EXPECT_THROW(angle_relation_check(b.pi, b.actions, {b.angles[0]}, b.plan, 1e-8), InvalidArgument);
}

TEST(AngleAdvance, SemiLocal) {
    const auto b = make_system("canonical-semi");
    const auto r = angle_advance_check(b.pi, b.field("p1"), b.angles[0], b.lattice_point(1), 0.3);
    EXPECT_LE(r.residual, 1e-12);
    EXPECT_EQ(r.action_drift, 0.0);
    EXPECT_EQ(r.orientation, 1);
}

TEST(AngleAdvance, GelfandCetlinMatchesConjugationOrbit) {
    const auto b = make_gelfand_cetlin(2);
    const auto x0 = b.lattice_point(11);
    const double t = 0.3;
    const auto r = angle_advance_check(b.pi, b.field("mu_1_1"), b.angles[0], x0, t);
    EXPECT_LE(r.residual, 1e-5);
    EXPECT_LE(r.action_drift, 1e-8);

    // the flow of the (1,1) entry multiplies the off-diagonal entry by a phase
    const Point xt = hamiltonian_flow(b.pi, b.field("mu_1_1"), x0, t);
    const std::complex<double> z0(x0[2], x0[3]);
    double best = INFINITY;
    int best_sign = 0;
    for (int s : {1, -1}) {
        const auto z = z0 * std::polar(1.0, s * 2.0 * kPi * t);
        const double d = std::hypot(xt[0] - x0[0], xt[1] - x0[1], std::abs(std::complex<double>(xt[2], xt[3]) - z));
        if (d < best) best = d, best_sign = s;
    }
    EXPECT_LE(best, 1e-8);
    const double advance = wrap_half(b.angles[0].value(xt) - b.angles[0].value(x0));
    EXPECT_NEAR(std::abs(advance), t, 1e-6);
    EXPECT_EQ(best_sign * (advance > 0 ? 1 : -1), best_sign * r.orientation);
}

TEST(AngleAdvance, SmallTimeLimitAndValidation) {
    const auto b = make_gelfand_cetlin(2);
    const auto x0 = b.lattice_point(2);
    EXPECT_LE(angle_advance_check(b.pi, b.field("mu_1_1"), b.angles[0], x0, 1e-6).residual, 1e-9);
    for (double bad : {0.0, 1.0, -0.1, 1.5, std::nan("")})
        EXPECT_THROW(angle_advance_check(b.pi, b.field("mu_1_1"), b.angles[0], x0, bad), InvalidArgument);
}

TEST(WrapHalf, Range) {
    EXPECT_EQ(wrap_half(0.75), -0.25);
    EXPECT_EQ(wrap_half(-0.75), 0.25);
    EXPECT_EQ(wrap_half(2.0), 0.0);
    EXPECT_NEAR(wrap_half(0.3 - 1.0), 0.3, 1e-15);
}

TEST(LatticeHelpers, RationalApproximation) {
    EXPECT_EQ(detail::rational_approx(0.5, 10), (std::pair<long, long>{1, 2}));
    EXPECT_EQ(detail::rational_approx(1.0 / 3.0 + 1e-12, 16), (std::pair<long, long>{1, 3}));
    EXPECT_EQ(detail::rational_approx(-0.75, 16), (std::pair<long, long>{-3, 4}));
    EXPECT_EQ(detail::rational_approx(kPi, 7), (std::pair<long, long>{22, 7}));
    EXPECT_EQ(detail::rational_approx(2.0, 16), (std::pair<long, long>{2, 1}));
}

TEST(LatticeHelpers, IntegerColumnBasisSpansTheGroup) {
    // generated group has index gcd of the 2x2 minors
    const std::vector<std::pair<std::vector<std::vector<long>>, long>> cases{
        {{{2, 0}, {0, 3}, {1, 1}}, 1},
        {{{4, 0}, {0, 6}}, 24},
        {{{2, 2}, {4, 0}, {0, 4}}, 8},
        {{{1, 0}, {0, 1}, {5, 7}, {-3, 2}}, 1},
    };
    for (const auto& [cols, index] : cases) {
        const auto basis = detail::integer_column_basis(cols, 2);
        ASSERT_EQ(basis.size(), 2u);
        const long det = basis[0][0] * basis[1][1] - basis[0][1] * basis[1][0];
        EXPECT_EQ(std::abs(det), index);
        // every generator is an integer combination of the basis
        for (const auto& c : cols) {
            const double a = static_cast<double>(c[0] * basis[1][1] - c[1] * basis[1][0]) / det;
            const double bb = static_cast<double>(basis[0][0] * c[1] - basis[0][1] * c[0]) / det;
            EXPECT_EQ(a, std::round(a));
            EXPECT_EQ(bb, std::round(bb));
        }
    }
}
