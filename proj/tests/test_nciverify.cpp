#include <gtest/gtest.h>

#include "nci/nci.hpp"
#include "oracles.hpp"

using namespace nci;

namespace {

oracle::RMat columns(const std::vector<Vector>& cols) {
    oracle::RMat m(cols.front().size(), std::vector<double>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t i = 0; i < cols[j].size(); ++i) m[i][j] = cols[j][i];
    return m;
}

} // namespace

TEST(NciFamily, Validation) {
    const auto b = make_central_force(1.0, "r^2/2");
    const auto& f = b.family->fields;
    EXPECT_NO_THROW(NciFamily(b.pi, f, 2));
    EXPECT_THROW(NciFamily(b.pi, f, 3), InvalidArgument);
    EXPECT_THROW(NciFamily(b.pi, {f[0], f[1]}, 4), InvalidArgument); // 2s < n
    EXPECT_THROW(NciFamily(b.pi, {}, 0), InvalidArgument);
    const auto other = make_central_force(1.0, "r^2/2");
    EXPECT_THROW(NciFamily(b.pi, other.family->fields, 2), ChartMismatch);
    EXPECT_EQ(b.family->n(), 6u);
    EXPECT_EQ(b.family->s(), 4u);
    EXPECT_EQ(b.family->r(), 2u);
}

TEST(Involution, CentralForce) {
    const auto b = make_central_force(1.0, "r^2/2");
    const auto res = involution_residuals(*b.family, b.plan.with_seed(3), 1e-9);
    EXPECT_TRUE(res.check.pass) << res.check.max_residual;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_LE(res.residuals(i, j), 1e-9);
    // mu12 and mu23 do not commute, and the matrix records it
    EXPECT_GT(res.residuals(2, 3), 1e-3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(res.residuals(i, j), res.residuals(j, i));
}

TEST(Involution, GelfandCetlinWithFiniteDifferenceGradients) {
    const auto b = make_gelfand_cetlin(3, ep::kTau, true);
    auto plan = b.plan.with_seed(5).with_count(10);
    const auto res = involution_residuals(*b.family, plan, 1e-6);
    const std::size_t s = b.family->s();
    EXPECT_EQ(s, 6u);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) EXPECT_LE(res.residuals(i, j), 1e-6) << i << "," << j;
}

TEST(Involution, CanonicalIsExact) {
    const auto b = make_canonical(2, 4, {{{1, 2}, "1 + z1^2"}}, false);
    const auto res = involution_residuals(*b.family, b.plan.with_seed(8), 1e-12);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_LE(res.residuals(i, j), 1e-12);
    EXPECT_TRUE(res.check.pass);
}

TEST(Regularity, CentralForceAgainstEliminationOracle) {
    const auto b = make_central_force(1.0, "r^2/2");
    const auto x = draw_samples(b.chart, b.plan.with_seed(42), "regularity-example").front();
    const auto rec = regularity_check(*b.family, x);
    EXPECT_EQ(rec.rank_df, 4);
    EXPECT_EQ(rec.rank_ham, 2);
    EXPECT_TRUE(rec.pass);

    std::vector<Vector> grads, hams;
    for (const auto& f : b.family->fields) {
        grads.push_back(oracle::gradient([&](const std::vector<double>& y) { return f.value_raw(y); }, x.coords()));
        if (hams.size() < 2) hams.push_back(hamiltonian_vector_field(b.pi, f, x));
    }
    EXPECT_EQ(oracle::elimination_rank(columns(grads), 1e-6), rec.rank_df);
    EXPECT_EQ(oracle::elimination_rank(columns(hams), 1e-6), rec.rank_ham);
}

TEST(Regularity, CollinearPointIsSingular) {
    const auto b = make_central_force(1.0, "r^2/2");
    const Point x(b.chart, {1.0, 0.0, 0.0, 2.0, 0.0, 0.0});
    const auto rec = regularity_check(*b.family, x);
    EXPECT_FALSE(rec.pass);
    EXPECT_LT(rec.rank_df, 4);
}

TEST(Regularity, CanonicalModel) {
    const auto b = make_canonical(2, 4, {{{1, 2}, "1 + z1^2"}}, false);
    for (const auto& x : draw_samples(b.chart, b.plan.with_count(5), "reg")) {
        const auto rec = regularity_check(*b.family, x);
        EXPECT_EQ(rec.rank_df, 4);
        EXPECT_EQ(rec.rank_ham, 2);
        EXPECT_TRUE(rec.pass);
    }
}

TEST(Regularity, InvariantUnderRescalingAndRecombination) {
    const auto b = make_central_force(1.0, "r^2/2");
    const auto& f = b.family->fields;
    const NciFamily scaled(b.pi, {scale(f[0], -3.0), scale(f[1], 0.01), f[2], scale(f[3], 7.0)}, 2);
    const NciFamily mixed(b.pi,
                          {f[0], f[1], linear_combination({f[2], f[3]}, {1.0, 2.0}, "a"),
                           linear_combination({f[2], f[3]}, {-1.0, 0.5}, "b")},
                          2);
    const Point collinear(b.chart, {1.0, 0.0, 0.0, 2.0, 0.0, 0.0});
    for (const auto& x : draw_samples(b.chart, b.plan.with_count(20), "reg-inv")) {
        const bool base = regularity_check(*b.family, x).pass;
        EXPECT_EQ(regularity_check(scaled, x).pass, base);
        EXPECT_EQ(regularity_check(mixed, x).pass, base);
    }
    EXPECT_FALSE(regularity_check(scaled, collinear).pass);
    EXPECT_FALSE(regularity_check(mixed, collinear).pass);
}

TEST(Regularity, BuiltInPlansOnlyAcceptRegularPoints) {
    for (const auto& name : system_names()) {
        const auto b = make_system(name);
        if (!b.family) continue;
        const auto c = regularity_suite(*b.family, b.plan.with_seed(13));
        EXPECT_TRUE(c.pass) << name << " " << c.note;
        EXPECT_EQ(c.max_residual, 0.0) << name;
    }
}

TEST(Casimir, Examples) {
    const auto c3 = Chart::make("r3", {"x", "y", "z"});
    const auto lp = make_lie_poisson(c3);
    SamplePlan plan;
    plan.box = {{-2, 2}, {-2, 2}, {-2, 2}};
    plan.count = 30;
    const auto C = ScalarField::parse("C", c3, "x^2 + y^2 + z^2");
    EXPECT_LE(casimir_residual(lp, C, plan), 1e-10);
    const double rx = casimir_residual(lp, ScalarField::parse("D", c3, "x"), plan);
    EXPECT_GT(rx, 0.5);
    EXPECT_LE(rx, std::sqrt(8.0));

    const auto gc = make_gelfand_cetlin(3, ep::kTau, true);
    for (int p = 1; p <= 3; ++p)
        EXPECT_LE(casimir_residual(gc.pi, gc.field("mu_3_" + std::to_string(p)), gc.plan.with_count(10)), 1e-6);
    EXPECT_TRUE(casimir_check(gc.pi, gc.casimirs, gc.plan.with_count(10), 1e-6).pass);

    const auto pl = Chart::make("plane", {"q", "p"});
    const auto can = BivectorField::canonical("Pi", pl, {{0, 1}});
    SamplePlan p2;
    p2.box = {{-1, 1}, {-1, 1}};
    p2.count = 5;
    EXPECT_DOUBLE_EQ(casimir_residual(can, ScalarField::coordinate(pl, 0), p2), 1.0);
}

TEST(Casimir, Homogeneity) {
    const auto b = make_central_force(1.0, "r^2/2");
    const auto& L = b.field("L");
    const double base = casimir_residual(b.pi, L, b.plan.with_count(10));
    for (double c : {-2.0, 0.5, 3.0})
        EXPECT_NEAR(casimir_residual(b.pi, scale(L, c), b.plan.with_count(10)), std::abs(c) * base, 1e-12 * base);
}

TEST(RankDrop, BuiltInBases) {
    for (const std::string name : {"canonical", "canonical-semi", "gelfand-cetlin", "euler-poinsot", "central-force"}) {
        const auto b = make_system(name);
        if (!b.base) continue;
        const auto c = rank_drop_check(*b.family, *b.base, b.plan.with_seed(2).with_count(20));
        EXPECT_TRUE(c.pass) << name << " " << c.max_residual;
    }
    const auto gc = make_gelfand_cetlin(3);
    const auto x = draw_samples(gc.chart, gc.plan.with_count(1), "rd").front();
    EXPECT_EQ(rank_at(gc.pi, x), 6);
    EXPECT_EQ(rank_at(gc.base->pi, Point(gc.base->pi.chart(), gc.base->projection(x.coords()))), 0);

    const auto ep_sys = make_system("euler-poinsot");
    const auto m = draw_samples(ep_sys.chart, ep_sys.plan.with_count(1), "rd").front();
    EXPECT_EQ(rank_at(ep_sys.pi, m), 6);
    EXPECT_EQ(rank_at(ep_sys.base->pi, Point(ep_sys.base->pi.chart(), ep_sys.base->projection(m.coords()))), 2);
}

TEST(RankDrop, DetectsWrongBase) {
    const auto b = make_canonical(2, 4, {}, false);
    // pretend the base carries a symplectic pair: the drop no longer matches
    const auto base_chart = Chart::make("fake", {"p1", "p2", "z1", "z2"});
    const BaseRecord fake{BivectorField::canonical("pi", base_chart, {{2, 3}}),
                          [](const Vector& x) { return Vector(x.begin() + 2, x.end()); }};
    const auto c = rank_drop_check(*b.family, fake, b.plan.with_count(5));
    EXPECT_FALSE(c.pass);
    EXPECT_EQ(c.max_residual, 2.0);
}

TEST(Completeness, Examples) {
    const auto can = make_canonical(2, 5, {{{1, 2}, "z3"}, {{1, 3}, "-z2"}, {{2, 3}, "z1"}}, false);
    EXPECT_EQ(completeness_spotcheck(*can.family, can.plan.with_count(10), 1e-12).max_residual, 0.0);

    const auto gc = make_gelfand_cetlin(3);
    const auto c = completeness_spotcheck(*gc.family, gc.plan.with_count(5), 1e-6);
    EXPECT_TRUE(c.pass) << c.max_residual;
}

TEST(Completeness, BuiltInSystems) {
    for (const auto& name : system_names()) {
        const auto b = make_system(name);
        if (!b.family) continue;
        const auto c = completeness_spotcheck(*b.family, b.plan.with_seed(4).with_count(10), 1e-5);
        EXPECT_TRUE(c.pass) << name << " " << c.max_residual;
    }
}

TEST(Sampler, ExhaustionAndDeterminism) {
    const auto c = Chart::make("line", {"x"});
    SamplePlan plan;
    plan.box = {{0, 1}};
    plan.count = 5;
    plan.predicate = [](const Point& p) { return p[0] > 2.0; };
    EXPECT_THROW(draw_samples(c, plan, "s"), SamplerExhausted);
    plan.predicate = {};
    const auto a = draw_samples(c, plan.with_seed(9), "s");
    const auto b = draw_samples(c, plan.with_seed(9), "s");
    const auto d = draw_samples(c, plan.with_seed(9), "t");
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k][0], b[k][0]);
        EXPECT_NE(a[k][0], d[k][0]);
    }
    EXPECT_THROW(draw_samples(c, plan.with_count(0), "s"), InvalidArgument);
}

TEST(Sampler, ResultsIndependentOfWorkerCount) {
    const auto b = make_gelfand_cetlin(3);
    auto plan = b.plan.with_seed(77).with_count(12);
    const auto one = involution_residuals(*b.family, plan, 1e-6);
    plan.workers = 4;
    const auto four = involution_residuals(*b.family, plan, 1e-6);
    EXPECT_EQ(one.check.max_residual, four.check.max_residual);
    EXPECT_EQ(one.check.worst_point, four.check.worst_point);
    for (std::size_t i = 0; i < b.family->s(); ++i)
        for (std::size_t j = 0; j < b.family->s(); ++j) EXPECT_EQ(one.residuals(i, j), four.residuals(i, j));
    EXPECT_EQ(jacobi_check(b.pi, plan).max_residual, jacobi_check(b.pi, plan.with_count(12)).max_residual);
}

TEST(ReduceMax, TiesAndNaN) {
    const auto c = Chart::make("line", {"x"});
    const std::vector<Point> pts{Point(c, {0.0}), Point(c, {1.0}), Point(c, {2.0})};
    const auto tie = reduce_max("t", pts, {1.0, 3.0, 3.0}, 5.0);
    EXPECT_EQ(tie.max_residual, 3.0);
    EXPECT_EQ(tie.worst_point, (Vector{1.0}));
    EXPECT_TRUE(tie.pass);
    const auto nan = reduce_max("n", pts, {1.0, std::nan(""), 0.0}, 5.0);
    EXPECT_FALSE(nan.pass);
    EXPECT_EQ(nan.worst_point, (Vector{1.0}));
}

TEST(GuardedCheck, ConvertsNumericalErrors) {
    const auto c = guarded_check("x", 1.0, []() -> CheckResult { throw IntegrationError("boom", IntegrationError::Kind::Blowup, 0.0); });
    EXPECT_FALSE(c.pass);
    EXPECT_NE(c.note.find("boom"), std::string::npos);
    EXPECT_THROW(guarded_check("y", 1.0, []() -> CheckResult { throw InvalidArgument("bad"); }), InvalidArgument);
}
