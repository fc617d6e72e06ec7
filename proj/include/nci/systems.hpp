// Built-in systems: canonical models, central force, the free rigid body on
// T*SO(3), Gelfand-Cetlin on Hermitian matrices and a few small demos.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nci/errors.hpp"
#include "nci/expr.hpp"
#include "nci/geometry.hpp"
#include "nci/nciverify.hpp"
#include "nci/numkernel.hpp"
#include "nci/random.hpp"
#include "nci/torusflow.hpp"

namespace nci {

/// A system-specific check run by `verify` next to the generic suite.
struct NamedCheck {
    std::string name;
    double tolerance = 0.0;
    std::function<CheckResult(std::uint64_t seed, std::size_t samples, unsigned workers)> run;
};

struct SystemBundle {
    SystemBundle(std::string name_, ChartPtr chart_, BivectorField pi_)
        : name(std::move(name_)), chart(std::move(chart_)), pi(std::move(pi_)) {}

    std::string name;
    ChartPtr chart;
    BivectorField pi;
    std::optional<NciFamily> family;
    std::vector<ScalarField> casimirs;
    std::vector<ScalarField> named_fields; ///< everything addressable by `flow --field`
    SamplePlan plan;
    std::optional<BaseRecord> base;
    std::vector<ScalarField> actions;
    std::vector<ScalarField> angles;
    bool fd_fields = false;
    bool compact_fibers = false;
    std::function<Point(std::uint64_t seed)> lattice_point;
    std::vector<NamedCheck> extra_checks;
    std::map<std::string, double> recorded;
    std::string notes;

    const ScalarField& field(const std::string& field_name) const {
        for (const auto& f : named_fields)
            if (f.name() == field_name) return f;
        std::string known;
        for (const auto& f : named_fields) known += (known.empty() ? "" : ", ") + f.name();
        throw InvalidArgument("system '" + name + "' has no field '" + field_name + "' (known: " + known + ")");
    }

    /// Hamiltonians whose joint flow spans the fibers (first r of the family).
    std::vector<ScalarField> lattice_fields() const {
        if (!family) throw InvalidArgument("system '" + name + "' has no NCI family");
        return family->hamiltonians();
    }
};

using SystemParams = std::map<std::string, std::string>;

namespace detail {

inline double param_number(const SystemParams& params, const std::string& key, double fallback) {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("parameter '" + key + "' must be a number, got '" + it->second + "'");
    }
}

inline int param_int(const SystemParams& params, const std::string& key, int fallback) {
    const double v = param_number(params, key, fallback);
    if (v != std::round(v)) throw InvalidArgument("parameter '" + key + "' must be an integer");
    return static_cast<int>(v);
}

inline void require_known(const SystemParams& params, const std::vector<std::string>& known, const std::string& sys,
                          const std::function<bool(const std::string&)>& also = {}) {
    for (const auto& [k, v] : params)
        if (std::find(known.begin(), known.end(), k) == known.end() && !(also && also(k)))
            throw InvalidArgument("system '" + sys + "' has no parameter '" + k + "'");
}

inline std::vector<std::pair<double, double>> uniform_box(std::size_t n, double lo, double hi) {
    return std::vector<std::pair<double, double>>(n, {lo, hi});
}

} // namespace detail

// ---------------------------------------------------------------------------
// Lie-Poisson R^3
// ---------------------------------------------------------------------------

/// {x, y} = sign z cyclically on R^3 with coordinates (x, y, z).
inline BivectorField make_lie_poisson(const ChartPtr& chart, double sign = 1.0, std::size_t offset = 0) {
    const std::size_t n = chart->dimension();
    if (offset + 3 > n) throw InvalidArgument("make_lie_poisson: chart too small");
    return BivectorField("lie-poisson", chart, [n, sign, offset](const Vector& x) {
        Vector up(n * (n - 1) / 2, 0.0);
        auto idx = [n](std::size_t i, std::size_t j) { return i * n - i * (i + 1) / 2 + (j - i - 1); };
        const std::size_t a = offset, b = offset + 1, c = offset + 2;
        up[idx(a, b)] = sign * x[c];
        up[idx(b, c)] = sign * x[a];
        up[idx(a, c)] = -sign * x[b];
        return up;
    });
}

// ---------------------------------------------------------------------------
// Canonical models
// ---------------------------------------------------------------------------

/// Flat (q in R^r) or semi-local (theta in (R/Z)^r) canonical model of rank r
/// with s functions: Pi = sum dq_i ^ dp_i + pi(z), family (p_1..p_r, z_1..z_{s-r}).
/// `c_exprs` maps (j, k), 1 <= j < k <= s - r, to {z_j, z_k} as an expression in z.
inline SystemBundle make_canonical(int r, int s, const std::map<std::pair<int, int>, std::string>& c_exprs,
                                   bool semi_local) {
    if (r < 1 || s < r) throw InvalidArgument("canonical model: need 1 <= r <= s");
    const int nz = s - r;
    std::vector<std::string> names;
    std::vector<bool> periodic;
    for (int i = 1; i <= r; ++i) {
        names.push_back((semi_local ? "th" : "q") + std::to_string(i));
        periodic.push_back(semi_local);
    }
    for (int i = 1; i <= r; ++i) names.push_back("p" + std::to_string(i)), periodic.push_back(false);
    std::vector<std::string> znames;
    for (int i = 1; i <= nz; ++i) {
        znames.push_back("z" + std::to_string(i));
        names.push_back(znames.back());
        periodic.push_back(false);
    }
    const std::string sys = semi_local ? "canonical-semi" : "canonical";
    const auto chart = Chart::make(sys, names, periodic);
    const auto n = static_cast<std::size_t>(r + s);

    std::vector<std::tuple<std::size_t, std::size_t, expr::Expression>> entries;
    std::vector<std::tuple<std::size_t, std::size_t, expr::Expression>> base_entries;
    std::vector<std::string> base_names;
    for (int i = 1; i <= r; ++i) base_names.push_back("p" + std::to_string(i));
    for (const auto& z : znames) base_names.push_back(z);
    for (int i = 0; i < r; ++i)
        entries.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(r + i),
                             expr::parse("1", names));
    for (const auto& [jk, src] : c_exprs) {
        const auto [j, k] = jk;
        if (!(1 <= j && j < k && k <= nz))
            throw InvalidArgument("canonical model: c_" + std::to_string(j) + std::to_string(k) +
                                  " needs 1 <= j < k <= " + std::to_string(nz));
        try {
            expr::parse(src, znames); // only z may appear
        } catch (const ParseError& e) {
            throw InvalidArgument("canonical model: c_" + std::to_string(j) + std::to_string(k) + ": " + e.what());
        }
        entries.emplace_back(static_cast<std::size_t>(2 * r + j - 1), static_cast<std::size_t>(2 * r + k - 1),
                             expr::parse(src, names));
        base_entries.emplace_back(static_cast<std::size_t>(r + j - 1), static_cast<std::size_t>(r + k - 1),
                                  expr::parse(src, base_names));
    }
    auto pi = BivectorField::from_expressions("Pi", chart, entries);

    SystemBundle b{sys, chart, pi};
    std::vector<ScalarField> family;
    for (int i = 0; i < r; ++i) family.push_back(ScalarField::coordinate(chart, static_cast<std::size_t>(r + i)));
    for (int i = 0; i < nz; ++i) family.push_back(ScalarField::coordinate(chart, static_cast<std::size_t>(2 * r + i)));
    b.family.emplace(pi, family, r);
    b.named_fields = family;
    for (int i = 0; i < r; ++i) b.named_fields.push_back(ScalarField::coordinate(chart, static_cast<std::size_t>(i)));

    b.plan.box = detail::uniform_box(n, -2.0, 2.0);
    for (int i = 0; i < r; ++i)
        if (semi_local) b.plan.box[static_cast<std::size_t>(i)] = {0.0, 1.0};
    b.plan.count = 50;

    const auto base_chart = Chart::make(sys + "-base", base_names);
    BaseRecord base{BivectorField::from_expressions("pi", base_chart, base_entries),
                    [r](const Vector& x) { return Vector(x.begin() + r, x.end()); }};
    b.base = base;

    if (semi_local) {
        b.compact_fibers = true;
        for (int i = 0; i < r; ++i) {
            b.actions.push_back(family[static_cast<std::size_t>(i)]);
            b.angles.push_back(ScalarField::coordinate(chart, static_cast<std::size_t>(i)));
        }
    }
    b.lattice_point = [chart, plan = b.plan](std::uint64_t seed) {
        return draw_samples(chart, plan.with_seed(seed).with_count(1), "lattice-base").front();
    };

    // the z-block must itself be Poisson
    const auto check = jacobi_check(pi, b.plan.with_seed(0x5eed).with_count(8));
    if (!check.pass)
        throw InvalidArgument("canonical model: z-block bracket violates the Jacobi identity (residual " +
                              std::to_string(check.max_residual) + ")");
    b.notes = "canonical model of rank " + std::to_string(r) + " with " + std::to_string(s) + " functions";
    return b;
}

// ---------------------------------------------------------------------------
// Central force
// ---------------------------------------------------------------------------

/// Particle of mass `mass` in R^3 under V(r); family (H, L, mu12, mu23), r = 2.
inline SystemBundle make_central_force(double mass, const std::string& potential) {
    if (!(mass > 0.0)) throw InvalidArgument("central force: mass must be > 0");
    expr::Expression V;
    try {
        V = expr::parse(potential, {"r"});
    } catch (const ParseError& e) {
        throw InvalidArgument(std::string("central force: potential: ") + e.what());
    }
    const auto chart = Chart::make("central-force", {"q1", "q2", "q3", "p1", "p2", "p3"});
    auto pi = BivectorField::canonical("Pi", chart, {{0, 3}, {1, 4}, {2, 5}});
    auto mu = [](std::span<const Dual> x, int i, int j) { return x[i] * x[3 + j] - x[j] * x[3 + i]; };
    auto H = ScalarField::from_dual("H", chart, [V, mass](std::span<const Dual> x) {
        const Dual r = sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        const Dual kinetic = (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]) / (2.0 * mass);
        const std::array<Dual, 1> env{r};
        return kinetic + V.eval(env);
    });
    auto L = ScalarField::from_dual("L", chart, [mu](std::span<const Dual> x) {
        const Dual a = mu(x, 0, 1), b = mu(x, 0, 2), c = mu(x, 1, 2);
        return a * a + b * b + c * c;
    });
    auto m12 = ScalarField::from_dual("mu12", chart, [mu](std::span<const Dual> x) { return mu(x, 0, 1); });
    auto m13 = ScalarField::from_dual("mu13", chart, [mu](std::span<const Dual> x) { return mu(x, 0, 2); });
    auto m23 = ScalarField::from_dual("mu23", chart, [mu](std::span<const Dual> x) { return mu(x, 1, 2); });

    SystemBundle b{"central-force", chart, pi};
    b.family.emplace(pi, std::vector<ScalarField>{H, L, m12, m23}, 2);
    b.named_fields = {H, L, m12, m13, m23};
    for (std::size_t i = 0; i < 6; ++i) b.named_fields.push_back(ScalarField::coordinate(chart, i));
    b.plan.box = detail::uniform_box(6, -2.0, 2.0);
    b.plan.count = 50;
    b.plan.predicate = [](const Point& x) {
        const Vector& c = x.coords();
        const double q = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
        const double p = std::sqrt(c[3] * c[3] + c[4] * c[4] + c[5] * c[5]);
        const double l0 = c[1] * c[5] - c[2] * c[4], l1 = c[2] * c[3] - c[0] * c[5], l2 = c[0] * c[4] - c[1] * c[3];
        const double cross = std::sqrt(l0 * l0 + l1 * l1 + l2 * l2);
        return q > 0.1 && cross > 0.1 * q * p && cross * cross > 1e-2;
    };
    b.lattice_point = [chart, plan = b.plan](std::uint64_t seed) {
        return draw_samples(chart, plan.with_seed(seed).with_count(1), "lattice-base").front();
    };
    b.compact_fibers = true; // for confining potentials such as the default
    b.notes = "particle in a central potential V(r) = " + V.to_string();
    return b;
}

// ---------------------------------------------------------------------------
// Free rigid body
// ---------------------------------------------------------------------------

namespace ep {

constexpr double kThetaMin = 0.05;
constexpr double kTau = 2.0 * std::numbers::pi;

struct Inertia {
    double x = 3.0, y = 2.0, z = 1.0;
};

struct Frame {
    std::array<Dual, 3> m; ///< body angular momentum
    std::array<Dual, 3> v; ///< spatial angular momentum R m
};

template <typename T>
using Mat3 = std::array<std::array<T, 3>, 3>;

template <typename T>
Mat3<T> mul3(const Mat3<T>& a, const Mat3<T>& b) {
    Mat3<T> c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            T s = a[i][0] * b[0][j];
            s = s + a[i][1] * b[1][j];
            s = s + a[i][2] * b[2][j];
            c[i][j] = s;
        }
    return c;
}

/// R = Rz(phi) Rx(theta) Rz(psi) from physical angles.
template <typename T>
Mat3<T> rotation(const T& phi, const T& theta, const T& psi) {
    using std::cos, std::sin;
    const T z(0.0), o(1.0);
    const Mat3<T> rz1{{{cos(phi), -sin(phi), z}, {sin(phi), cos(phi), z}, {z, z, o}}};
    const Mat3<T> rx{{{o, z, z}, {z, cos(theta), -sin(theta)}, {z, sin(theta), cos(theta)}}};
    const Mat3<T> rz2{{{cos(psi), -sin(psi), z}, {sin(psi), cos(psi), z}, {z, z, o}}};
    return mul3(mul3(rz1, rx), rz2);
}

/// Chart (phi, theta, psi, p_phi, p_theta, p_psi): phi, psi in turns; the
/// momenta of phi and psi are 2 pi times the physical ones.
inline Frame frame(std::span<const Dual> x) {
    const Dual ph = x[0] * kTau, th = x[1], ps = x[2] * kTau;
    const Dual P_ph = x[3] / kTau, P_th = x[4], P_ps = x[5] / kTau;
    const Dual st = sin(th), ct = cos(th), sp = sin(ps), cp = cos(ps);
    const Dual a = (P_ph - P_ps * ct) / st;
    Frame f;
    f.m = {a * sp + P_th * cp, a * cp - P_th * sp, P_ps};
    const auto R = rotation(ph, th, ps);
    for (int i = 0; i < 3; ++i) f.v[i] = R[i][0] * f.m[0] + R[i][1] * f.m[1] + R[i][2] * f.m[2];
    return f;
}

inline Frame frame(const Vector& x) {
    std::vector<Dual> d(x.begin(), x.end());
    return frame(std::span<const Dual>(d));
}

inline Vector body_momentum(const Vector& x) {
    const Frame f = frame(x);
    return {f.m[0].v, f.m[1].v, f.m[2].v};
}

inline Vector spatial_momentum(const Vector& x) {
    const Frame f = frame(x);
    return {f.v[0].v, f.v[1].v, f.v[2].v};
}

inline double energy(const Vector& m, const Inertia& I) {
    return 0.5 * (m[0] * m[0] / I.x + m[1] * m[1] / I.y + m[2] * m[2] / I.z);
}

/// |v|^2 / (2 I_x) < h < |v|^2 / (2 I_y).
inline bool in_B(const Vector& v, double h, const Inertia& I) {
    const double c = dot(v, v);
    return c / (2.0 * I.x) < h && h < c / (2.0 * I.y);
}

/// |v|^2 / (2 I_y) < h < |v|^2 / (2 I_z).
inline bool in_Bprime(const Vector& v, double h, const Inertia& I) {
    const double c = dot(v, v);
    return c / (2.0 * I.y) < h && h < c / (2.0 * I.z);
}

/// Chart coordinates of (R, m); throws if theta falls outside the chart box.
inline Vector chart_point(const Matrix& R, const Vector& m) {
    const double th = std::acos(std::clamp(R(2, 2), -1.0, 1.0));
    if (!(th > kThetaMin && th < std::numbers::pi - kThetaMin))
        throw InvalidArgument("rigid body chart: theta = " + std::to_string(th) + " outside the valid box");
    const double ph = std::atan2(R(0, 2), -R(1, 2));
    const double ps = std::atan2(R(2, 0), R(2, 1));
    const double st = std::sin(th), ct = std::cos(th), sp = std::sin(ps), cp = std::cos(ps);
    const double P_ph = m[0] * st * sp + m[1] * st * cp + m[2] * ct;
    const double P_th = m[0] * cp - m[1] * sp;
    const double P_ps = m[2];
    return {wrap_unit(ph / kTau), th, wrap_unit(ps / kTau), kTau * P_ph, P_th, kTau * P_ps};
}

/// Rotation by `angle` about the unit vector `axis` (Rodrigues).
inline Matrix axis_rotation(const Vector& axis, double angle) {
    const Vector k = axpy(1.0 / norm(axis) - 1.0, axis, axis);
    const double c = std::cos(angle), s = std::sin(angle);
    Matrix R(3, 3);
    const double K[3][3] = {{0, -k[2], k[1]}, {k[2], 0, -k[0]}, {-k[1], k[0], 0}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double kk = 0.0;
            for (int l = 0; l < 3; ++l) kk += K[i][l] * K[l][j];
            R(i, j) = (i == j ? 1.0 : 0.0) + s * K[i][j] + (1.0 - c) * kk;
        }
    return R;
}

/// A rotation taking direction a to direction b, followed by a turn of
/// `twist` about b.
inline Matrix aligning_rotation(const Vector& a, const Vector& b, double twist) {
    const Vector ua = axpy(1.0 / norm(a) - 1.0, a, a);
    const Vector ub = axpy(1.0 / norm(b) - 1.0, b, b);
    const Vector axis{ua[1] * ub[2] - ua[2] * ub[1], ua[2] * ub[0] - ua[0] * ub[2], ua[0] * ub[1] - ua[1] * ub[0]};
    const double s = norm(axis);
    const double angle = std::atan2(s, dot(ua, ub));
    const Matrix align = s < 1e-14 ? Matrix::identity(3) : axis_rotation(axis, angle);
    return axis_rotation(ub, twist) * align;
}

/// Over the whole fiber through (v, m) the Euler angle theta stays inside
/// the chart box with margin `delta`.
inline bool theta_range_ok(const Vector& v, const Vector& m, const Inertia& I, double delta) {
    const double c2 = dot(m, m);
    const double h = energy(m, I);
    const double zmax2 = std::max(0.0, (2.0 * h - c2 / I.x) / (1.0 / I.z - 1.0 / I.x));
    const double beta0 = std::acos(std::min(1.0, std::sqrt(zmax2 / c2)));
    const double gamma = std::acos(std::clamp(v[2] / norm(v), -1.0, 1.0));
    return gamma < beta0 - delta || gamma > std::numbers::pi - beta0 + delta;
}

/// Base point of the reference fiber used by the lattice tests.
inline Vector reference_point() {
    const Vector m{2.0, 0.2, 0.2};
    const Vector dir{0.3, 0.2, 0.93};
    const Matrix R = aligning_rotation(m, dir, 0.4);
    return chart_point(R, m);
}

} // namespace ep

/// Free rigid body on T*SO(3) in z-x-z Euler angles with inertia
/// Ix > Iy > Iz > 0. Family (sH, tC, ty, tz), r = 2.
inline SystemBundle make_euler_poinsot(double Ix, double Iy, double Iz) {
    if (!(Ix > Iy && Iy > Iz && Iz > 0.0)) throw InvalidArgument("rigid body: need Ix > Iy > Iz > 0");
    const ep::Inertia I{Ix, Iy, Iz};
    const auto chart = Chart::make("euler-poinsot", {"phi", "theta", "psi", "p_phi", "p_theta", "p_psi"},
                                   {true, false, true, false, false, false});
    auto pi = BivectorField::canonical("Pi", chart, {{0, 3}, {1, 4}, {2, 5}});

    auto component = [&](const std::string& name, bool spatial, int i) {
        return ScalarField::from_dual(name, chart, [spatial, i](std::span<const Dual> x) {
            const ep::Frame f = ep::frame(x);
            return spatial ? f.v[i] : f.m[i];
        });
    };
    auto sH = ScalarField::from_dual("sH", chart, [I](std::span<const Dual> x) {
        const ep::Frame f = ep::frame(x);
        return 0.5 * (f.m[0] * f.m[0] / I.x + f.m[1] * f.m[1] / I.y + f.m[2] * f.m[2] / I.z);
    });
    auto tC = ScalarField::from_dual("tC", chart, [](std::span<const Dual> x) {
        const ep::Frame f = ep::frame(x);
        return f.v[0] * f.v[0] + f.v[1] * f.v[1] + f.v[2] * f.v[2];
    });
    std::vector<ScalarField> s_fields{component("sx", false, 0), component("sy", false, 1), component("sz", false, 2)};
    std::vector<ScalarField> t_fields{component("tx", true, 0), component("ty", true, 1), component("tz", true, 2)};

    SystemBundle b{"euler-poinsot", chart, pi};
    b.family.emplace(pi, std::vector<ScalarField>{sH, tC, t_fields[1], t_fields[2]}, 2);
    b.named_fields = {sH, tC};
    for (const auto& f : t_fields) b.named_fields.push_back(f);
    for (const auto& f : s_fields) b.named_fields.push_back(f);
    b.compact_fibers = true;

    // sign of {sx, sy} = eps sz, fixed once at a reference point
    const Point ref(chart, ep::reference_point());
    const double eps = bracket(pi, s_fields[0], s_fields[1], ref) / s_fields[2].value(ref) < 0.0 ? -1.0 : 1.0;
    b.recorded["epsilon"] = eps;

    b.plan.count = 50;
    b.plan.box = {{0.0, 1.0}, {ep::kThetaMin, std::numbers::pi - ep::kThetaMin}, {0.0, 1.0},
                  {-4.0 * ep::kTau, 4.0 * ep::kTau}, {-2.0, 2.0}, {-4.0 * ep::kTau, 4.0 * ep::kTau}};
    b.plan.generator = [](Rng& rng) {
        const double th = rng.uniform(ep::kThetaMin, std::numbers::pi - ep::kThetaMin);
        const double ph = rng.uniform(), ps = rng.uniform();
        const Vector m{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
        const auto R = ep::rotation(ph * ep::kTau, th, ps * ep::kTau);
        Matrix Rm(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) Rm(i, j) = R[i][j];
        const double st = std::sin(th), ct = std::cos(th), sp = std::sin(ps * ep::kTau), cp = std::cos(ps * ep::kTau);
        return Vector{ph, th, ps, ep::kTau * (m[0] * st * sp + m[1] * st * cp + m[2] * ct), m[0] * cp - m[1] * sp,
                      ep::kTau * m[2]};
    };
    auto regular = [I](const Point& p) {
        const Vector& x = p.coords();
        if (!(x[1] > ep::kThetaMin && x[1] < std::numbers::pi - ep::kThetaMin)) return false;
        const Vector m = ep::body_momentum(x);
        const Vector v = ep::spatial_momentum(x);
        const double c = dot(m, m);
        if (c < 0.09 || m[0] <= 0.0) return false;
        if (!ep::in_B(v, ep::energy(m, I), I)) return false;
        const double rel = (ep::energy(m, I) - c / (2.0 * I.x)) / (c / (2.0 * I.y) - c / (2.0 * I.x));
        return rel > 0.02 && rel < 0.98 && std::abs(v[0]) > 0.05 * std::sqrt(c);
    };
    b.plan.predicate = regular;

    const auto base_chart = Chart::make("euler-poinsot-base", {"v1", "v2", "v3", "h"});
    b.base = BaseRecord{make_lie_poisson(base_chart, -eps), [I](const Vector& x) {
                            const Vector m = ep::body_momentum(x);
                            Vector out = ep::spatial_momentum(x);
                            out.push_back(ep::energy(m, I));
                            return out;
                        }};

    // seeded fiber base points: regular, theta stays in the chart box over
    // the fiber, body period below 10
    b.lattice_point = [chart, plan = b.plan, I](std::uint64_t seed) {
        const auto lp_chart = Chart::make("lie-poisson", {"x", "y", "z"});
        const auto lp = make_lie_poisson(lp_chart);
        const auto H = ScalarField::from_dual("H", lp_chart, [I](std::span<const Dual> m) {
            return 0.5 * (m[0] * m[0] / I.x + m[1] * m[1] / I.y + m[2] * m[2] / I.z);
        });
        constexpr double delta = 0.1;
        Rng rng = Rng::substream(seed, "lattice-base");
        for (int draw = 0; draw < 2000; ++draw) {
            const Vector m{rng.uniform(0.3, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
            const double c2 = dot(m, m);
            const double zmax2 = std::max(0.0, (2.0 * ep::energy(m, I) - c2 / I.x) / (1.0 / I.z - 1.0 / I.x));
            const double beta0 = std::acos(std::min(1.0, std::sqrt(zmax2 / c2)));
            const double gamma = rng.uniform(0.0, 1.0) * (beta0 - delta);
            const double az = rng.uniform(0.0, ep::kTau), twist = rng.uniform(0.0, ep::kTau);
            const bool flip = rng.uniform() < 0.5;
            if (!(beta0 > 2.0 * delta)) continue;
            const double g = flip ? std::numbers::pi - gamma : gamma;
            const Vector dir{std::sin(g) * std::cos(az), std::sin(g) * std::sin(az), std::cos(g)};
            const Matrix R = ep::aligning_rotation(m, dir, twist);
            const double th = std::acos(std::clamp(R(2, 2), -1.0, 1.0));
            if (!(th > ep::kThetaMin && th < std::numbers::pi - ep::kThetaMin)) continue;
            const Point x(chart, ep::chart_point(R, m));
            if (!plan.predicate(x)) continue;
            if (!ep::theta_range_ok(ep::spatial_momentum(x.coords()), m, I, delta)) continue;
            try {
                if (detect_period(lp, H, Point(lp_chart, m)) < 10.0) return x;
            } catch (const NoPeriodFound&) {
            }
        }
        throw SamplerExhausted("sampler 'lattice-base' found no admissible fiber after 2000 draws");
    };

    // groupoid identities: s Poisson, t anti-Poisson, {s*F, t*G} = 0
    b.extra_checks.push_back(NamedCheck{
        "groupoid", 1e-8, [chart, pi, s_fields, t_fields, eps, plan = b.plan](std::uint64_t seed, std::size_t count,
                                                                             unsigned workers) {
            SamplePlan p = plan.with_seed(seed).with_count(count);
            p.workers = workers;
            p.predicate = nullptr;
            const auto samples = draw_samples(chart, p, "groupoid");
            const Vector res = parallel_map<double>(samples.size(), workers, [&](std::size_t k) {
                const Point& x = samples[k];
                double worst = 0.0;
                for (int i = 0; i < 3; ++i) {
                    const int j = (i + 1) % 3, l = (i + 2) % 3; // {x_i, x_j} = x_l
                    worst = std::max(worst, std::abs(bracket(pi, s_fields[i], s_fields[j], x) -
                                                     eps * s_fields[l].value(x)));
                    worst = std::max(worst, std::abs(bracket(pi, t_fields[i], t_fields[j], x) +
                                                     eps * t_fields[l].value(x)));
                    for (int q = 0; q < 3; ++q)
                        worst = std::max(worst, std::abs(bracket(pi, s_fields[i], t_fields[q], x)));
                }
                return worst;
            });
            CheckResult c = reduce_max("groupoid", samples, res, 1e-8);
            c.note = "epsilon=" + std::string(eps < 0 ? "-1" : "+1");
            return c;
        }});
    b.notes = "free rigid body, inertia (" + std::to_string(Ix) + ", " + std::to_string(Iy) + ", " +
              std::to_string(Iz) + ")";
    return b;
}

// ---------------------------------------------------------------------------
// Gelfand-Cetlin
// ---------------------------------------------------------------------------

namespace gc {

inline std::vector<std::string> coordinate_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t k = 1; k <= n; ++k) names.push_back("d" + std::to_string(k));
    for (std::size_t k = 1; k <= n; ++k)
        for (std::size_t l = k + 1; l <= n; ++l) {
            names.push_back("re" + std::to_string(k) + std::to_string(l));
            names.push_back("im" + std::to_string(k) + std::to_string(l));
        }
    return names;
}

inline CMatrix to_matrix(std::size_t n, const Vector& x) { return HermitianMatrix::from_coordinates(n, x).to_complex(); }

/// Chart gradient of F from its Hermitian gradient G, dF(Y) = Tr(G Y).
inline Vector chart_gradient(const CMatrix& G) {
    const std::size_t n = G.rows();
    Vector g(n * n);
    for (std::size_t k = 0; k < n; ++k) g[k] = G(k, k).real();
    std::size_t idx = n;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = k + 1; l < n; ++l) {
            g[idx++] = 2.0 * G(k, l).real();
            g[idx++] = 2.0 * G(k, l).imag();
        }
    return g;
}

/// Hermitian gradients of the chart coordinate functions.
inline std::vector<CMatrix> coordinate_gradients(std::size_t n) {
    std::vector<CMatrix> out;
    for (std::size_t k = 0; k < n; ++k) {
        CMatrix e(n, n);
        e(k, k) = 1.0;
        out.push_back(e);
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = k + 1; l < n; ++l) {
            CMatrix re(n, n), im(n, n);
            re(k, l) = re(l, k) = 0.5;
            im(k, l) = Complex(0.0, 0.5);
            im(l, k) = Complex(0.0, -0.5);
            out.push_back(re);
            out.push_back(im);
        }
    return out;
}

/// Eigendecomposition of the leading i x i block.
inline EigenDecomposition level(const CMatrix& X, std::size_t i) {
    CMatrix block(i, i);
    for (std::size_t a = 0; a < i; ++a)
        for (std::size_t b = 0; b < i; ++b) block(a, b) = X(a, b);
    return eigh(HermitianMatrix::from_complex(block));
}

inline double min_gap(const Vector& ev, std::size_t p) {
    double g = std::numeric_limits<double>::infinity();
    if (p > 0) g = std::min(g, ev[p] - ev[p - 1]);
    if (p + 1 < ev.size()) g = std::min(g, ev[p + 1] - ev[p]);
    return g;
}

/// mu_p^i (1-based i, p) with its chart gradient pad(v v*).
inline ValueGrad mu(const CMatrix& X, std::size_t i, std::size_t p) {
    const std::size_t n = X.rows();
    if (!(1 <= p && p <= i && i <= n)) throw InvalidArgument("gelfand-cetlin: need 1 <= p <= i <= n");
    const EigenDecomposition e = level(X, i);
    if (min_gap(e.eigenvalues, p - 1) < 1e-8)
        throw RegularityError("gelfand-cetlin: spectral gap of level " + std::to_string(i) + " below 1e-8");
    CMatrix G(n, n);
    for (std::size_t a = 0; a < i; ++a)
        for (std::size_t b = 0; b < i; ++b) G(a, b) = e.eigenvectors(a, p - 1) * std::conj(e.eigenvectors(b, p - 1));
    return {e.eigenvalues[p - 1], chart_gradient(G)};
}

/// Angle phi_p^i in [0, 1): with V the eigenvectors of X^(i), each scaled so
/// its last entry is real positive, the argument of (V* X)_{p, i+1}.
inline double angle(const CMatrix& X, std::size_t i, std::size_t p) {
    const std::size_t n = X.rows();
    if (!(1 <= p && p <= i && i < n)) throw InvalidArgument("gelfand-cetlin angle: need 1 <= p <= i < n");
    const EigenDecomposition e = level(X, i);
    if (min_gap(e.eigenvalues, p - 1) < 1e-8)
        throw RegularityError("gelfand-cetlin: spectral gap of level " + std::to_string(i) + " below 1e-8");
    const Complex last = e.eigenvectors(i - 1, p - 1);
    if (std::abs(last) < 1e-10) throw AngleUndefined("gelfand-cetlin angle: vanishing last eigenvector component");
    const Complex phase = std::conj(last) / std::abs(last);
    Complex z = 0.0;
    for (std::size_t a = 0; a < i; ++a) z += std::conj(e.eigenvectors(a, p - 1) * phase) * X(a, i);
    if (std::abs(z) < 1e-14) throw AngleUndefined("gelfand-cetlin angle: vanishing coupling entry");
    return wrap_unit(std::arg(z) / ep::kTau);
}

/// Strict interlacing and simple spectra with margin `gap`; angle levels need
/// last eigenvector components of size at least 1e-3.
inline bool regular(const CMatrix& X, double gap) {
    const std::size_t n = X.rows();
    std::vector<Vector> ev;
    for (std::size_t i = 1; i <= n; ++i) {
        const EigenDecomposition e = level(X, i);
        for (std::size_t p = 1; p < i; ++p)
            if (e.eigenvalues[p] - e.eigenvalues[p - 1] < gap) return false;
        if (i < n)
            for (std::size_t p = 0; p < i; ++p)
                if (std::abs(e.eigenvectors(i - 1, p)) < 1e-3) return false;
        ev.push_back(e.eigenvalues);
    }
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t p = 0; p < i; ++p)
            if (!(ev[i][p] + gap < ev[i - 1][p] && ev[i - 1][p] + gap < ev[i][p + 1])) return false;
    return true;
}

/// Strict interlacing mu^{i+1}_p < mu^i_p < mu^{i+1}_{p+1} at every level.
inline bool interlaces_strictly(const CMatrix& X) { return regular(X, 0.0); }

} // namespace gc

/// All mu_p^i at X keyed by (i, p), with chart gradients.
inline std::map<std::pair<int, int>, ValueGrad> gc_actions(const HermitianMatrix& X) {
    const CMatrix m = X.to_complex();
    std::map<std::pair<int, int>, ValueGrad> out;
    for (std::size_t i = 1; i <= X.dimension(); ++i)
        for (std::size_t p = 1; p <= i; ++p) out[{static_cast<int>(i), static_cast<int>(p)}] = gc::mu(m, i, p);
    // eigenvalues shared between consecutive levels put X on the boundary
    for (int i = 1; i < static_cast<int>(X.dimension()); ++i)
        for (int p = 1; p <= i; ++p) {
            const double v = out[{i, p}].value;
            if (!(out[{i + 1, p}].value + 1e-8 < v && v + 1e-8 < out[{i + 1, p + 1}].value))
                throw RegularityError("gelfand-cetlin: eigenvalues of levels " + std::to_string(i) + " and " +
                                      std::to_string(i + 1) + " do not interlace strictly");
        }
    return out;
}

inline double gc_angle(const HermitianMatrix& X, std::size_t i, std::size_t p) {
    return gc::angle(X.to_complex(), i, p);
}

/// Bracket {F, G}(X) = kappa Tr(i [grad F, grad G] X) on the n x n Hermitian
/// matrices; the mu_p^i flows for i < n have period 2 pi / kappa.
inline SystemBundle make_gelfand_cetlin(int n_in, double kappa = ep::kTau, bool fd_gradients = false) {
    if (n_in < 2 || n_in > 5) throw InvalidArgument("gelfand-cetlin: need 2 <= n <= 5");
    if (!(kappa != 0.0 && std::isfinite(kappa))) throw InvalidArgument("gelfand-cetlin: kappa must be finite, nonzero");
    const auto n = static_cast<std::size_t>(n_in);
    const auto chart = Chart::make("gelfand-cetlin", gc::coordinate_names(n));
    const std::size_t dim = n * n;

    // C_ab = i [B_a, B_b], P_ab = kappa Re Tr(C_ab X)
    const auto B = gc::coordinate_gradients(n);
    std::vector<CMatrix> C;
    for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t c = a + 1; c < dim; ++c) {
            const CMatrix ab = B[a] * B[c];
            const CMatrix ba = B[c] * B[a];
            CMatrix m(n, n);
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t l = 0; l < n; ++l) m(k, l) = Complex(0.0, 1.0) * (ab(k, l) - ba(k, l));
            C.push_back(m);
        }
    BivectorField pi("Pi", chart, [C, n, kappa](const Vector& x) {
        const CMatrix X = gc::to_matrix(n, x);
        Vector up(C.size());
        for (std::size_t q = 0; q < C.size(); ++q) {
            Complex tr = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t l = 0; l < n; ++l) tr += C[q](k, l) * X(l, k);
            up[q] = kappa * tr.real();
        }
        return up;
    });

    auto mu_field = [&](std::size_t i, std::size_t p) {
        ScalarField f("mu_" + std::to_string(i) + "_" + std::to_string(p), chart,
                      [n, i, p](const Vector& x) { return gc::mu(gc::to_matrix(n, x), i, p); });
        return fd_gradients ? with_fd_gradient(f) : f;
    };
    std::vector<ScalarField> family, casimirs, actions, angles;
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t p = 1; p <= i; ++p) {
            family.push_back(mu_field(i, p));
            actions.push_back(family.back());
            angles.push_back(ScalarField::from_values(
                "phi_" + std::to_string(i) + "_" + std::to_string(p), chart,
                [n, i, p](const Vector& x) { return gc::angle(gc::to_matrix(n, x), i, p); }, Codomain::Circle));
        }
    for (std::size_t p = 1; p <= n; ++p) {
        family.push_back(mu_field(n, p));
        casimirs.push_back(family.back());
    }
    const int r = static_cast<int>(n * (n - 1) / 2);

    SystemBundle b{"gelfand-cetlin", chart, pi};
    b.family.emplace(pi, family, r);
    b.casimirs = casimirs;
    b.actions = actions;
    b.angles = angles;
    b.named_fields = family;
    for (const auto& a : angles) b.named_fields.push_back(a);
    b.fd_fields = true; // angles always, eigenvalues optionally
    b.compact_fibers = true;
    b.recorded["kappa"] = kappa;
    b.plan.count = 20;
    b.plan.box = detail::uniform_box(dim, -1.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) b.plan.box[k] = {-2.0, 2.0};
    b.plan.predicate = [n](const Point& x) { return gc::regular(gc::to_matrix(n, x.coords()), 1e-2); };

    const auto base_chart = Chart::make("gelfand-cetlin-base", [&] {
        std::vector<std::string> names;
        for (const auto& f : family) names.push_back(f.name());
        return names;
    }());
    b.base = BaseRecord{BivectorField::constant("zero", base_chart, Matrix(family.size(), family.size(), 0.0)),
                        [family](const Vector& x) {
                            Vector out;
                            for (const auto& f : family) out.push_back(f.value_raw(x));
                            return out;
                        }};
    b.lattice_point = [chart, plan = b.plan](std::uint64_t seed) {
        return draw_samples(chart, plan.with_seed(seed).with_count(1), "lattice-base").front();
    };
    b.notes = "Gelfand-Cetlin system on " + std::to_string(n) + "x" + std::to_string(n) + " Hermitian matrices";
    return b;
}

// ---------------------------------------------------------------------------
// Demos
// ---------------------------------------------------------------------------

/// S^1 x R^3 with Pi = d_theta ^ d_z + (y d_x - x d_y) ^ d_z + (x^2 + y^2) d_x ^ d_y.
/// Not an NCI system; carries the isotropy witness check.
inline SystemBundle make_not_nci() {
    const auto chart = Chart::make("not-nci", {"theta", "x", "y", "z"}, {true, false, false, false});
    const std::vector<std::string> names = chart->coordinates();
    auto pi = BivectorField::from_expressions("Pi", chart,
                                              {{0, 3, expr::parse("1", names)},
                                               {1, 3, expr::parse("y", names)},
                                               {2, 3, expr::parse("-x", names)},
                                               {1, 2, expr::parse("x^2 + y^2", names)}});
    SystemBundle b{"not-nci", chart, pi};
    for (std::size_t i = 0; i < 4; ++i) b.named_fields.push_back(ScalarField::coordinate(chart, i));
    b.plan.count = 50;
    b.plan.box = {{0.0, 1.0}, {-2.0, 2.0}, {-2.0, 2.0}, {-2.0, 2.0}};
    b.plan.predicate = [](const Point& p) { return std::hypot(p[1], p[2]) > 0.1; };
    b.extra_checks.push_back(NamedCheck{
        "isotropy_witness", 1e-10, [chart, pi, plan = b.plan](std::uint64_t seed, std::size_t count, unsigned workers) {
            SamplePlan p = plan.with_seed(seed).with_count(count);
            const auto samples = draw_samples(chart, p, "isotropy_witness");
            const Vector res = parallel_map<double>(samples.size(), workers, [&](std::size_t k) {
                const Point& x = samples[k];
                const double rho2 = x[1] * x[1] + x[2] * x[2];
                const Vector v = sharp(pi, {0.0, x[1] / rho2, x[2] / rho2, -1.0}, x);
                return norm(axpy(-1.0, Vector{1.0, 0.0, 0.0, 0.0}, v));
            });
            return reduce_max("isotropy_witness", samples, res, 1e-10);
        }});
    b.notes = "isotropic foliation without an NCI family";
    return b;
}

/// T^4 (th1, th2, psi1, psi2) with Pi = d_th1 ^ d_psi1 + d_th2 ^ d_psi2 + alpha d_th1 ^ d_th2.
inline SystemBundle make_torus_alpha(double alpha) {
    const auto chart = Chart::make("torus-alpha", {"th1", "th2", "psi1", "psi2"}, {true, true, true, true});
    Matrix P(4, 4, 0.0);
    P(0, 2) = 1.0, P(2, 0) = -1.0;
    P(1, 3) = 1.0, P(3, 1) = -1.0;
    P(0, 1) = alpha, P(1, 0) = -alpha;
    auto pi = BivectorField::constant("Pi", chart, P);
    SystemBundle b{"torus-alpha", chart, pi};
    std::vector<ScalarField> psi{ScalarField::coordinate(chart, 2), ScalarField::coordinate(chart, 3)};
    b.family.emplace(pi, psi, 2);
    b.actions = psi;
    b.angles = {ScalarField::coordinate(chart, 0), ScalarField::coordinate(chart, 1)};
    for (std::size_t i = 0; i < 4; ++i) b.named_fields.push_back(ScalarField::coordinate(chart, i));
    b.compact_fibers = true;
    b.recorded["alpha"] = alpha;
    b.plan.count = 50;
    b.plan.box = detail::uniform_box(4, 0.0, 1.0);
    b.lattice_point = [chart, plan = b.plan](std::uint64_t seed) {
        return draw_samples(chart, plan.with_seed(seed).with_count(1), "lattice-base").front();
    };
    b.notes = "torus T^4 with a twisted bracket between the candidate angles";
    return b;
}

/// {th1 + F1, th2 + F2} on the torus-alpha system for fields F1, F2.
inline double coisotropy_defect(const SystemBundle& torus, const ScalarField& F1, const ScalarField& F2,
                                const Point& x) {
    const auto& th1 = torus.angles.at(0);
    const auto& th2 = torus.angles.at(1);
    return bracket(torus.pi, th1, th2, x) + bracket(torus.pi, th1, F2, x) + bracket(torus.pi, F1, th2, x) +
           bracket(torus.pi, F1, F2, x);
}

/// T^2 (theta, psi) with Pi = d_theta ^ d_psi and family (psi).
inline SystemBundle make_circle_bundle() {
    const auto chart = Chart::make("circle-bundle", {"theta", "psi"}, {true, true});
    auto pi = BivectorField::canonical("Pi", chart, {{0, 1}});
    SystemBundle b{"circle-bundle", chart, pi};
    const auto psi = ScalarField::coordinate(chart, 1);
    b.family.emplace(pi, std::vector<ScalarField>{psi}, 1);
    b.actions = {psi};
    b.angles = {ScalarField::coordinate(chart, 0)};
    b.named_fields = {ScalarField::coordinate(chart, 0), psi};
    b.compact_fibers = true;
    b.plan.count = 50;
    b.plan.box = detail::uniform_box(2, 0.0, 1.0);
    b.lattice_point = [chart, plan = b.plan](std::uint64_t seed) {
        return draw_samples(chart, plan.with_seed(seed).with_count(1), "lattice-base").front();
    };
    b.notes = "trivial circle bundle over a circle";
    return b;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& system_names() {
    static const std::vector<std::string> names{"canonical",      "canonical-semi", "central-force", "euler-poinsot",
                                                "gelfand-cetlin", "not-nci",        "torus-alpha",   "circle-bundle"};
    return names;
}

/// Builds a registered system. Parameters are strings: numbers, or
/// expressions for canonical c_jk entries ("c12") and the potential ("V").
inline SystemBundle make_system(const std::string& name, const SystemParams& params = {}) {
    if (name == "canonical" || name == "canonical-semi") {
        detail::require_known(params, {"r", "s"}, name, [](const std::string& k) {
            return k.size() == 3 && k[0] == 'c' && std::isdigit(static_cast<unsigned char>(k[1])) &&
                   std::isdigit(static_cast<unsigned char>(k[2]));
        });
        const int r = detail::param_int(params, "r", 2);
        const int s = detail::param_int(params, "s", 4);
        std::map<std::pair<int, int>, std::string> c;
        bool any = false;
        for (const auto& [k, v] : params)
            if (k[0] == 'c') {
                c[{k[1] - '0', k[2] - '0'}] = v;
                any = true;
            }
        if (!any && s - r >= 2) c[{1, 2}] = "1 + z1^2";
        return make_canonical(r, s, c, name == "canonical-semi");
    }
    if (name == "central-force") {
        detail::require_known(params, {"mass", "V"}, name);
        const auto it = params.find("V");
        return make_central_force(detail::param_number(params, "mass", 1.0), it == params.end() ? "r^2/2" : it->second);
    }
    if (name == "euler-poinsot") {
        detail::require_known(params, {"Ix", "Iy", "Iz"}, name);
        return make_euler_poinsot(detail::param_number(params, "Ix", 3.0), detail::param_number(params, "Iy", 2.0),
                                  detail::param_number(params, "Iz", 1.0));
    }
    if (name == "gelfand-cetlin") {
        detail::require_known(params, {"n", "kappa", "fd"}, name);
        return make_gelfand_cetlin(detail::param_int(params, "n", 3), detail::param_number(params, "kappa", ep::kTau),
                                   detail::param_int(params, "fd", 0) != 0);
    }
    if (name == "not-nci") {
        detail::require_known(params, {}, name);
        return make_not_nci();
    }
    if (name == "torus-alpha") {
        detail::require_known(params, {"alpha"}, name);
        return make_torus_alpha(detail::param_number(params, "alpha", 0.5));
    }
    if (name == "circle-bundle") {
        detail::require_known(params, {}, name);
        return make_circle_bundle();
    }
    throw InvalidArgument("unknown system '" + name + "'");
}

} // namespace nci
