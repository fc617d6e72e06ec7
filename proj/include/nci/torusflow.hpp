// Periods and action lattices of commuting Hamiltonian flows on compact
// fibers, plus checks of the defining relations of action-angle variables.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nci/errors.hpp"
#include "nci/geometry.hpp"
#include "nci/nciverify.hpp"
#include "nci/numkernel.hpp"
#include "nci/random.hpp"

namespace nci {

struct FlowProbe {
    double return_tol = 1e-6;
    double t_max = 12.0;
    double coarse_step = 0.05;
    int max_directions = 24;
    std::uint64_t seed = 0;
    OdeSettings ode{};

    void validate() const {
        if (!(return_tol > 0.0) || !(t_max > 0.0) || !(coarse_step > 0.0))
            throw InvalidArgument("FlowProbe: tolerance, horizon and step must be > 0");
        if (!(coarse_step < t_max)) throw InvalidArgument("FlowProbe: coarse step must be < horizon");
        ode.validate();
    }
};

struct LatticeBasis {
    Vector base;                     ///< base point coordinates
    std::vector<std::string> fields; ///< generating field names
    Matrix T;                        ///< column k is a return time vector in R^r
    Vector residuals;                ///< return distance per column
    double det = 0.0;                ///< |det T|
};

// ---------------------------------------------------------------------------
// Flows
// ---------------------------------------------------------------------------

/// Composition of the flows of X_{f_1}, ..., X_{f_r} for times t_1, ..., t_r,
/// in raw (unwrapped) coordinates.
inline Vector joint_flow_raw(const BivectorField& pi, const std::vector<ScalarField>& fields, const Vector& t,
                             Vector x, const OdeSettings& settings = {}) {
    for (std::size_t i = 0; i < fields.size(); ++i)
        if (t[i] != 0.0) x = integrate_unwrapped(hamiltonian_flow_field(pi, fields[i]), std::move(x), t[i], settings);
    return x;
}

/// Joint flow; fields must be pairwise in involution at x0 (to 1e-6).
inline Point joint_flow(const BivectorField& pi, const std::vector<ScalarField>& fields, const Vector& t,
                        const Point& x0, const OdeSettings& settings = {}) {
    require_same_chart(pi.chart(), x0.chart(), "joint_flow");
    if (t.size() != fields.size()) throw InvalidArgument("joint_flow: need one time per field");
    for (std::size_t i = 0; i < fields.size(); ++i)
        for (std::size_t j = i + 1; j < fields.size(); ++j) {
            const double b = bracket(pi, fields[i], fields[j], x0);
            if (std::abs(b) > 1e-6)
                throw InvalidArgument("joint_flow: fields '" + fields[i].name() + "' and '" + fields[j].name() +
                                      "' are not in involution (bracket " + std::to_string(b) + ")");
        }
    return Point(x0.chart(), joint_flow_raw(pi, fields, t, x0.coords(), settings));
}

/// Hamiltonian field of sum_i u_i f_i.
inline VectorFieldFn combined_flow_field(const BivectorField& pi, const std::vector<ScalarField>& fields,
                                         const Vector& u) {
    return [pi, fields, u](const Vector& x) {
        const Matrix p = pi.matrix_raw(x);
        Vector g(x.size(), 0.0);
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (u[i] != 0.0) g = axpy(u[i], fields[i].evaluate_raw(x).gradient, g);
        return p * g;
    };
}

namespace detail {

// Golden-section minimisation of f on [a, b].
template <typename F>
std::pair<double, double> golden_min(F&& f, double a, double b, double width = 1e-12, int max_iter = 90) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > width; ++it) {
        if (fc < fd) {
            b = d, d = c, fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return fc < fd ? std::pair{c, fc} : std::pair{d, fd};
}

} // namespace detail

/// Smallest t in (0, t_max] with the flow of vf returning to x0, refined by
/// golden-section search on the wrapped chart distance.
inline double detect_period_field(const ChartPtr& chart, const VectorFieldFn& vf, const Vector& x0,
                                  const FlowProbe& probe) {
    probe.validate();
    const double speed0 = norm(vf(x0));
    if (speed0 == 0.0) throw NoPeriodFound("detect_period: equilibrium point (vector field vanishes)");
    const double h = probe.coarse_step;
    const auto steps = static_cast<std::size_t>(std::ceil(probe.t_max / h));
    std::vector<Vector> states{x0};
    Vector dist{0.0};
    double max_speed = speed0;
    auto refine = [&](std::size_t k) -> std::optional<double> {
        const double t0 = static_cast<double>(k - 1) * h;
        const Vector& start = states[k - 1];
        auto f = [&](double t) { return chart->distance(integrate_unwrapped(vf, start, t - t0, probe.ode), x0); };
        const auto [t, d] = detail::golden_min(f, t0, t0 + 2.0 * h);
        if (d < probe.return_tol) return t;
        return std::nullopt;
    };
    for (std::size_t k = 1; k <= steps + 1; ++k) {
        states.push_back(integrate_unwrapped(vf, states.back(), h, probe.ode));
        dist.push_back(chart->distance(states.back(), x0));
        max_speed = std::max(max_speed, norm(vf(states.back())));
        if (k < 2) continue;
        const std::size_t m = k - 1; // candidate index, neighbours m-1 and k
        if (dist[m] <= dist[m - 1] && dist[m] <= dist[k] && dist[m] < 2.0 * h * max_speed + probe.return_tol &&
            static_cast<double>(m - 1) * h < probe.t_max)
            if (auto t = refine(m); t && *t <= probe.t_max) return *t;
    }
    throw NoPeriodFound("detect_period: no return within horizon " + std::to_string(probe.t_max));
}

inline double detect_period(const BivectorField& pi, const ScalarField& h, const Point& x0,
                            const FlowProbe& probe = {}) {
    require_same_chart(pi.chart(), x0.chart(), "detect_period");
    return detect_period_field(pi.chart(), hamiltonian_flow_field(pi, h), x0.coords(), probe);
}

// ---------------------------------------------------------------------------
// Lattices
// ---------------------------------------------------------------------------

namespace detail {

inline double return_residual(const BivectorField& pi, const std::vector<ScalarField>& fields, const Vector& t,
                              const Vector& x0, const OdeSettings& ode) {
    return pi.chart()->distance(joint_flow_raw(pi, fields, t, x0, ode), x0);
}

// Gauss-Newton on t -> wrapped(Phi_t(x0) - x0) using d Phi_t / d t_i = X_{f_i}(Phi_t x0).
inline std::pair<Vector, double> polish_return(const BivectorField& pi, const std::vector<ScalarField>& fields,
                                               Vector t, const Vector& x0, const OdeSettings& ode) {
    const std::size_t r = fields.size();
    const ChartPtr& chart = pi.chart();
    double best = std::numeric_limits<double>::infinity();
    Vector best_t = t;
    for (int it = 0; it < 12; ++it) {
        const Vector xt = joint_flow_raw(pi, fields, t, x0, ode);
        const Vector res = chart->difference(xt, x0);
        const double d = norm(res);
        if (d < best) best = d, best_t = t;
        if (d < 1e-12) break;
        std::vector<Vector> cols;
        for (const auto& f : fields) cols.push_back(hamiltonian_vector_field_raw(pi, f, xt));
        Matrix jtj(r, r);
        Vector jtr(r);
        for (std::size_t a = 0; a < r; ++a) {
            jtr[a] = -dot(cols[a], res);
            for (std::size_t b = 0; b < r; ++b) jtj(a, b) = dot(cols[a], cols[b]);
        }
        Vector delta;
        try {
            delta = solve(jtj, jtr);
        } catch (const Error&) {
            break;
        }
        if (norm(delta) > 0.5) break; // left the basin
        for (std::size_t a = 0; a < r; ++a) t[a] += delta[a];
        if (norm(delta) < 1e-14) break;
    }
    return {best_t, best};
}

// Best rational approximation p/q with q <= max_den.
inline std::pair<long, long> rational_approx(double x, long max_den) {
    long best_p = std::lround(x), best_q = 1;
    double best_err = std::abs(x - static_cast<double>(best_p));
    for (long q = 2; q <= max_den; ++q) {
        const long p = std::lround(x * static_cast<double>(q));
        const double err = std::abs(x - static_cast<double>(p) / static_cast<double>(q));
        if (err < best_err - 1e-15) best_err = err, best_p = p, best_q = q;
    }
    return {best_p, best_q};
}

// Column Hermite normal form of an integer r x m matrix of full row rank;
// returns the r nonzero columns.
inline std::vector<std::vector<long>> integer_column_basis(std::vector<std::vector<long>> cols, std::size_t r) {
    std::vector<std::vector<long>> basis;
    for (std::size_t row = 0; row < r; ++row) {
        // Euclid on entries `row` across the remaining columns.
        while (true) {
            std::size_t pivot = cols.size();
            for (std::size_t c = 0; c < cols.size(); ++c)
                if (cols[c][row] != 0 && (pivot == cols.size() || std::abs(cols[c][row]) < std::abs(cols[pivot][row])))
                    pivot = c;
            if (pivot == cols.size()) break;
            bool reduced = false;
            for (std::size_t c = 0; c < cols.size(); ++c) {
                if (c == pivot || cols[c][row] == 0) continue;
                const long q = cols[c][row] / cols[pivot][row];
                for (std::size_t k = 0; k < r; ++k) cols[c][k] -= q * cols[pivot][k];
                reduced = true;
            }
            if (!reduced) {
                basis.push_back(cols[pivot]);
                cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(pivot));
                break;
            }
        }
        cols.erase(std::remove_if(cols.begin(), cols.end(),
                                  [&](const std::vector<long>& c) {
                                      return std::all_of(c.begin(), c.end(), [](long v) { return v == 0; });
                                  }),
                   cols.end());
    }
    return basis;
}

// Lattice basis of the group generated by `vecs` (all assumed in one lattice).
inline Matrix basis_from_generators(const std::vector<Vector>& vecs, std::size_t r) {
    // Greedy choice of r independent generators maximising |det|.
    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < vecs.size() && chosen.size() < r; ++k) {
        std::vector<Vector> trial;
        for (auto c : chosen) trial.push_back(vecs[c]);
        trial.push_back(vecs[k]);
        Matrix m(r, trial.size());
        for (std::size_t j = 0; j < trial.size(); ++j) m.set_column(j, trial[j]);
        if (numerical_rank(m, RankPolicy{1e-6}) == static_cast<int>(trial.size())) chosen.push_back(k);
    }
    if (chosen.size() < r) throw LatticeError("detect_lattice: generators are rank deficient", vecs);
    Matrix b0(r, r);
    for (std::size_t j = 0; j < r; ++j) b0.set_column(j, vecs[chosen[j]]);
    const Matrix inv = inverse(b0);
    std::vector<Vector> coeffs;
    long den = 1;
    for (const auto& v : vecs) {
        Vector c = inv * v;
        for (double& x : c) {
            const auto [p, q] = rational_approx(x, 64);
            if (std::abs(x - static_cast<double>(p) / static_cast<double>(q)) > 1e-5) {
                x = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            den = std::lcm(den, q);
        }
        coeffs.push_back(c);
    }
    if (den > 4096) den = 1;
    std::vector<std::vector<long>> icols;
    for (const auto& c : coeffs) {
        if (std::any_of(c.begin(), c.end(), [](double x) { return std::isnan(x); })) continue;
        std::vector<long> ic(r);
        for (std::size_t k = 0; k < r; ++k) ic[k] = std::lround(c[k] * static_cast<double>(den));
        icols.push_back(ic);
    }
    const auto ib = integer_column_basis(icols, r);
    if (ib.size() < r) return b0;
    Matrix out(r, r);
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t k = 0; k < r; ++k) {
            double s = 0.0;
            for (std::size_t l = 0; l < r; ++l) s += b0(k, l) * static_cast<double>(ib[j][l]);
            out(k, j) = s / static_cast<double>(den);
        }
    return out;
}

// Orbit samples of the joint flow of the periodic generators found so far.
inline std::vector<std::pair<Vector, Vector>> orbit_grid(const BivectorField& pi,
                                                         const std::vector<ScalarField>& fields,
                                                         const std::vector<Vector>& periods, const Vector& x0,
                                                         const OdeSettings& ode, std::size_t per_axis) {
    std::vector<std::pair<Vector, Vector>> grid{{Vector(fields.size(), 0.0), x0}};
    for (const auto& v : periods) {
        std::vector<std::pair<Vector, Vector>> next;
        const VectorFieldFn vf = combined_flow_field(pi, fields, v);
        for (const auto& [t, x] : grid) {
            Vector xs = x;
            for (std::size_t k = 0; k < per_axis; ++k) {
                const double s = static_cast<double>(k) / static_cast<double>(per_axis);
                next.emplace_back(axpy(s, v, t), xs);
                xs = integrate_unwrapped(vf, xs, 1.0 / static_cast<double>(per_axis), ode);
            }
        }
        grid = std::move(next);
    }
    return grid;
}

} // namespace detail

/// Finds a reduced basis of the lattice of return times of the joint flow of
/// `fields` through m.
inline LatticeBasis detect_lattice(const BivectorField& pi, const std::vector<ScalarField>& fields, const Point& m,
                                   const FlowProbe& probe = {}) {
    probe.validate();
    require_same_chart(pi.chart(), m.chart(), "detect_lattice");
    const std::size_t r = fields.size();
    if (r == 0 || r > 4) throw InvalidArgument("detect_lattice: need 1 <= r <= 4 fields");
    const ChartPtr& chart = pi.chart();
    const Vector& x0 = m.coords();
    const double tol = probe.return_tol;

    std::vector<Vector> found;
    auto independent_count = [&]() {
        if (found.empty()) return 0;
        Matrix a(r, found.size());
        for (std::size_t j = 0; j < found.size(); ++j) a.set_column(j, found[j]);
        return numerical_rank(a, RankPolicy{1e-6});
    };
    auto accept = [&](Vector t) {
        auto [tp, res] = detail::polish_return(pi, fields, std::move(t), x0, probe.ode);
        if (res < tol) {
            found.push_back(tp);
            return true;
        }
        return false;
    };

    // (a) axis scans
    std::vector<std::size_t> failing;
    for (std::size_t i = 0; i < r; ++i) {
        Vector u(r, 0.0);
        u[i] = 1.0;
        try {
            const double T = detect_period_field(chart, combined_flow_field(pi, fields, u), x0, probe);
            if (!accept(axpy(T, u, Vector(r, 0.0)))) failing.push_back(i);
        } catch (const NoPeriodFound&) {
            failing.push_back(i);
        }
    }

    // (a') reduced scans: flow a failing field and look for the first time it
    // lands on the orbit of the periodic generators already found.
    if (!failing.empty() && !found.empty() && independent_count() < static_cast<int>(r)) {
        const std::size_t per_axis = found.size() == 1 ? 240 : 48;
        const auto grid = detail::orbit_grid(pi, fields, found, x0, probe.ode, per_axis);
        double spacing = 0.0;
        for (std::size_t k = 1; k < grid.size() && k < per_axis; ++k)
            spacing = std::max(spacing, chart->distance(grid[k].second, grid[k - 1].second));
        for (std::size_t i : failing) {
            if (independent_count() >= static_cast<int>(r)) break;
            Vector u(r, 0.0);
            u[i] = 1.0;
            const VectorFieldFn vf = combined_flow_field(pi, fields, u);
            const double h = probe.coarse_step;
            Vector x = x0;
            std::vector<double> dist;
            std::vector<std::size_t> nearest;
            double max_speed = norm(vf(x0));
            const auto steps = static_cast<std::size_t>(std::ceil(probe.t_max / h));
            int attempts = 0;
            for (std::size_t k = 1; k <= steps && attempts < 64; ++k) {
                x = integrate_unwrapped(vf, x, h, probe.ode);
                max_speed = std::max(max_speed, norm(vf(x)));
                double best = std::numeric_limits<double>::infinity();
                std::size_t arg = 0;
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    const double d = chart->distance(x, grid[g].second);
                    if (d < best) best = d, arg = g;
                }
                dist.push_back(best);
                nearest.push_back(arg);
                const std::size_t n = dist.size();
                if (n < 3) continue;
                const std::size_t c = n - 2;
                if (dist[c] <= dist[c - 1] && dist[c] <= dist[c + 1] && dist[c] < 2.0 * h * max_speed + 2.0 * spacing) {
                    ++attempts;
                    // time along field i is (c + 1) * h; remove the orbit offset
                    Vector t(r, 0.0);
                    t[i] = static_cast<double>(c + 1) * h;
                    t = axpy(-1.0, grid[nearest[c]].first, t);
                    const int before = independent_count();
                    if (accept(t)) {
                        if (independent_count() > before) break;
                        found.pop_back();
                    }
                }
            }
        }
    }

    // (b) seeded direction scans
    if (independent_count() < static_cast<int>(r)) {
        Rng rng = Rng::substream(probe.seed, "lattice-directions");
        for (int d = 0; d < probe.max_directions && independent_count() < static_cast<int>(r); ++d) {
            Vector u(r);
            for (double& c : u) c = rng.normal();
            const double nu = norm(u);
            for (double& c : u) c /= nu;
            try {
                const double T = detect_period_field(chart, combined_flow_field(pi, fields, u), x0, probe);
                accept(axpy(T, u, Vector(r, 0.0)));
            } catch (const NoPeriodFound&) {
            } catch (const IntegrationError&) {
            }
        }
    }
    if (independent_count() < static_cast<int>(r))
        throw LatticeError("detect_lattice: found " + std::to_string(independent_count()) + " of " +
                               std::to_string(r) + " independent return vectors",
                           found);

    Matrix basis = detail::basis_from_generators(found, r);

    // primitivity: B c / p must not return for c != 0 mod p
    for (int prime : {2, 3}) {
        bool refined = true;
        while (refined) {
            refined = false;
            std::vector<int> c(r, 0);
            std::size_t total = 1;
            for (std::size_t k = 0; k < r; ++k) total *= static_cast<std::size_t>(prime);
            for (std::size_t code = 1; code < total && !refined; ++code) {
                std::size_t rem = code;
                for (std::size_t k = 0; k < r; ++k) {
                    c[k] = static_cast<int>(rem % static_cast<std::size_t>(prime));
                    rem /= static_cast<std::size_t>(prime);
                }
                Vector t(r, 0.0);
                for (std::size_t k = 0; k < r; ++k)
                    for (std::size_t l = 0; l < r; ++l) t[k] += basis(k, l) * c[l] / prime;
                if (detail::return_residual(pi, fields, t, x0, probe.ode) < 100.0 * tol) {
                    auto [tp, res] = detail::polish_return(pi, fields, t, x0, probe.ode);
                    if (res < tol) {
                        std::vector<Vector> gens;
                        for (std::size_t l = 0; l < r; ++l) gens.push_back(basis.column(l));
                        gens.push_back(tp);
                        basis = detail::basis_from_generators(gens, r);
                        refined = true;
                    }
                }
            }
        }
    }

    LatticeBasis out;
    out.base = x0;
    for (const auto& f : fields) out.fields.push_back(f.name());
    out.T = lattice_reduce(basis);
    out.residuals.resize(r);
    for (std::size_t j = 0; j < r; ++j) {
        auto [tp, res] = detail::polish_return(pi, fields, out.T.column(j), x0, probe.ode);
        out.residuals[j] = detail::return_residual(pi, fields, out.T.column(j), x0, probe.ode);
        if (res < out.residuals[j] && norm(axpy(-1.0, out.T.column(j), tp)) < 1e-6) {
            out.T.set_column(j, tp);
            out.residuals[j] = res;
        }
        if (!(out.residuals[j] < tol)) {
            std::vector<Vector> partial;
            for (std::size_t l = 0; l < r; ++l) partial.push_back(out.T.column(l));
            throw LatticeError("detect_lattice: reduced column " + std::to_string(j) + " has return residual " +
                                   std::to_string(out.residuals[j]),
                               partial);
        }
    }
    out.det = std::abs(determinant(out.T));
    return out;
}

// ---------------------------------------------------------------------------
// Action-angle relations
// ---------------------------------------------------------------------------

inline double wrap_half(double d) { return d - std::round(d); }

struct AngleRelationResult {
    CheckResult check;
    std::vector<int> orientation; ///< +1 or -1 per angle
    double max_theta_theta = 0.0;
    double max_delta = 0.0;
};

/// |{theta_i, theta_j}| and |{theta_j, p_i} - o_j delta_ij| at samples, where
/// o_j in {+1, -1} is fixed once per angle from the first sample.
inline AngleRelationResult angle_relation_check(const BivectorField& pi, const std::vector<ScalarField>& actions,
                                                const std::vector<ScalarField>& angles, const SamplePlan& plan,
                                                double tol) {
    if (actions.size() != angles.size() || actions.empty())
        throw InvalidArgument("angle_relation_check: need matching non-empty action and angle lists");
    const std::size_t r = actions.size();
    const auto samples = draw_samples(pi.chart(), plan, "angle_relations");
    struct Local {
        double tt = 0.0;
        Matrix ta;
    };
    const auto per = parallel_map<Local>(samples.size(), plan.workers, [&](std::size_t k) {
        const Vector& x = samples[k].coords();
        const Matrix p = pi.matrix_raw(x);
        std::vector<Vector> ga, gt;
        for (const auto& a : actions) ga.push_back(a.evaluate_raw(x).gradient);
        for (const auto& t : angles) gt.push_back(t.evaluate_raw(x).gradient);
        Local l{0.0, Matrix(r, r)};
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j) {
                if (i < j) l.tt = std::max(l.tt, std::abs(quadratic_form(gt[i], p, gt[j])));
                l.ta(i, j) = quadratic_form(gt[j], p, ga[i]);
            }
        return l;
    });
    AngleRelationResult out;
    out.orientation.assign(r, 1);
    for (std::size_t j = 0; j < r; ++j) out.orientation[j] = per.front().ta(j, j) < 0.0 ? -1 : 1;
    Vector res(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j)
                d = std::max(d, std::abs(per[k].ta(i, j) - (i == j ? out.orientation[j] : 0)));
        out.max_delta = std::max(out.max_delta, d);
        out.max_theta_theta = std::max(out.max_theta_theta, per[k].tt);
        res[k] = std::max(d, per[k].tt);
    }
    out.check = reduce_max("angle_relations", samples, res, tol);
    return out;
}

struct AngleAdvanceResult {
    double residual = 0.0;
    double action_drift = 0.0;
    int orientation = 1;
};

/// Flows x0 along X_action for time t and compares the angle advance with
/// +-t; also reports the largest drift of the `conserved` fields.
inline AngleAdvanceResult angle_advance_check(const BivectorField& pi, const ScalarField& action,
                                              const ScalarField& angle, const Point& x0, double t,
                                              const std::vector<ScalarField>& conserved = {},
                                              const OdeSettings& settings = {}) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidArgument("angle_advance_check: t must lie in (0, 1)");
    AngleAdvanceResult out;
    out.orientation = bracket(pi, angle, action, x0) < 0.0 ? -1 : 1;
    const Point xt = hamiltonian_flow(pi, action, x0, t, settings);
    out.residual = std::abs(wrap_half(angle.value(xt) - angle.value(x0) - out.orientation * t));
    std::vector<ScalarField> watch = conserved;
    if (watch.empty()) watch.push_back(action);
    for (const auto& f : watch) out.action_drift = std::max(out.action_drift, std::abs(f.value(xt) - f.value(x0)));
    return out;
}

} // namespace nci
