// Coordinate charts, scalar and bivector fields, and the Poisson calculus on
// them. Sign conventions:
//
//   {f, g}(x)   = grad f(x)^T P(x) grad g(x),   P_ij = {x_i, x_j}
//   X_h(x)      = P(x) grad h(x),               so X_h(g) = {g, h}
//   sharp(a)    = -P(x) a,                      so sharp(dh) = -X_h
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nci/dual.hpp"
#include "nci/errors.hpp"
#include "nci/expr.hpp"
#include "nci/linalg.hpp"
#include "nci/numkernel.hpp"

namespace nci {

// ---------------------------------------------------------------------------
// Charts and points
// ---------------------------------------------------------------------------

class Chart;
using ChartPtr = std::shared_ptr<const Chart>;

/// Named coordinate system. Periodic coordinates live in R/Z, stored in [0, 1).
class Chart {
  public:
    static ChartPtr make(std::string name, std::vector<std::string> coordinates, std::vector<bool> periodic = {}) {
        if (coordinates.empty()) throw InvalidArgument("Chart '" + name + "': dimension must be >= 1");
        if (periodic.empty()) periodic.assign(coordinates.size(), false);
        if (periodic.size() != coordinates.size())
            throw InvalidArgument("Chart '" + name + "': periodic flags do not match coordinates");
        std::set<std::string> seen;
        for (const auto& c : coordinates) {
            if (c.empty()) throw InvalidArgument("Chart '" + name + "': empty coordinate name");
            if (!seen.insert(c).second) throw InvalidArgument("Chart '" + name + "': duplicate coordinate '" + c + "'");
        }
        return ChartPtr(new Chart(std::move(name), std::move(coordinates), std::move(periodic)));
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t dimension() const noexcept { return coordinates_.size(); }
    const std::vector<std::string>& coordinates() const noexcept { return coordinates_; }
    const std::vector<bool>& periodic() const noexcept { return periodic_; }
    bool is_periodic(std::size_t i) const { return periodic_.at(i); }
    bool any_periodic() const { return std::find(periodic_.begin(), periodic_.end(), true) != periodic_.end(); }

    std::size_t index_of(const std::string& coordinate) const {
        const auto it = std::find(coordinates_.begin(), coordinates_.end(), coordinate);
        if (it == coordinates_.end()) throw InvalidArgument("Chart '" + name_ + "' has no coordinate '" + coordinate + "'");
        return static_cast<std::size_t>(it - coordinates_.begin());
    }

    /// Wraps periodic entries of a raw coordinate vector into [0, 1).
    Vector wrap(Vector x) const {
        for (std::size_t i = 0; i < x.size() && i < periodic_.size(); ++i)
            if (periodic_[i]) x[i] = wrap_unit(x[i]);
        return x;
    }

    /// Coordinate difference a - b, periodic entries taken in (-1/2, 1/2].
    Vector difference(const Vector& a, const Vector& b) const {
        Vector d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            d[i] = a[i] - b[i];
            if (periodic_[i]) d[i] -= std::round(d[i]);
        }
        return d;
    }

    /// Euclidean distance with per-coordinate periodic wrap.
    double distance(const Vector& a, const Vector& b) const { return norm(difference(a, b)); }

  private:
    Chart(std::string name, std::vector<std::string> coordinates, std::vector<bool> periodic)
        : name_(std::move(name)), coordinates_(std::move(coordinates)), periodic_(std::move(periodic)) {}

    std::string name_;
    std::vector<std::string> coordinates_;
    std::vector<bool> periodic_;
};

/// A point of a chart. Periodic entries are kept in [0, 1); all finite.
class Point {
  public:
    Point(ChartPtr chart, Vector coords) : chart_(std::move(chart)), coords_(std::move(coords)) {
        if (!chart_) throw InvalidArgument("Point: null chart");
        if (coords_.size() != chart_->dimension())
            throw InvalidArgument("Point: expected " + std::to_string(chart_->dimension()) + " coordinates in chart '" +
                                  chart_->name() + "'");
        for (double v : coords_)
            if (!std::isfinite(v)) throw InvalidArgument("Point: non-finite coordinate");
        coords_ = chart_->wrap(std::move(coords_));
    }

    const ChartPtr& chart() const noexcept { return chart_; }
    const Vector& coords() const noexcept { return coords_; }
    double operator[](std::size_t i) const { return coords_.at(i); }
    std::size_t dimension() const noexcept { return coords_.size(); }

  private:
    ChartPtr chart_;
    Vector coords_;
};

inline void require_same_chart(const ChartPtr& a, const ChartPtr& b, const char* where) {
    if (a.get() != b.get())
        throw ChartMismatch(std::string(where) + ": chart mismatch ('" + (a ? a->name() : "null") + "' vs '" +
                            (b ? b->name() : "null") + "')");
}

// ---------------------------------------------------------------------------
// Scalar fields
// ---------------------------------------------------------------------------

struct ValueGrad {
    double value = 0.0;
    Vector gradient;
};

enum class Codomain { Real, Circle };

/// Central-difference gradient of a scalar function. For circle-valued
/// functions the samples are unwrapped relative to the centre value into
/// (-1/2, 1/2), i.e. the gradient is that of a local lift.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, Codomain codomain,
                          double rel_step = 1e-5) {
    Vector g(x.size());
    const double centre = codomain == Codomain::Circle ? f(x) : 0.0;
    Vector xp = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double h = rel_step * std::max(1.0, std::abs(x[k]));
        xp[k] = x[k] + h;
        double fp = f(xp);
        xp[k] = x[k] - h;
        double fm = f(xp);
        xp[k] = x[k];
        if (codomain == Codomain::Circle) {
            fp = centre + ((fp - centre) - std::round(fp - centre));
            fm = centre + ((fm - centre) - std::round(fm - centre));
        }
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Named smooth function on a chart. Evaluators receive coordinates with
/// periodic entries already wrapped into [0, 1).
class ScalarField {
  public:
    using Evaluator = std::function<ValueGrad(const Vector&)>;

    ScalarField(std::string name, ChartPtr chart, Evaluator eval, Codomain codomain = Codomain::Real)
        : name_(std::move(name)), chart_(std::move(chart)), eval_(std::move(eval)), codomain_(codomain) {
        if (!chart_) throw InvalidArgument("ScalarField '" + name_ + "': null chart");
    }

    /// Field given by a dual-number program; the gradient is exact.
    static ScalarField from_dual(std::string name, ChartPtr chart,
                                 std::function<Dual(std::span<const Dual>)> program,
                                 Codomain codomain = Codomain::Real) {
        const std::size_t n = chart->dimension();
        return ScalarField(
            std::move(name), std::move(chart),
            [program = std::move(program), n](const Vector& x) {
                std::vector<Dual> seeds;
                seeds.reserve(n);
                for (std::size_t k = 0; k < n; ++k) seeds.push_back(Dual::variable(x[k], k, n));
                const Dual d = program(seeds);
                return ValueGrad{d.v, d.gradient(n)};
            },
            codomain);
    }

    /// Field given by an expression over the chart's coordinates and parameters.
    static ScalarField from_expression(std::string name, ChartPtr chart, const expr::Expression& e,
                                       const std::map<std::string, double>& params = {},
                                       Codomain codomain = Codomain::Real) {
        const auto coords = chart->coordinates();
        for (const auto& d : e.declared())
            if (std::find(coords.begin(), coords.end(), d) == coords.end() && !params.count(d))
                throw InvalidArgument("ScalarField '" + name + "': name '" + d + "' is neither coordinate nor parameter");
        return ScalarField(
            std::move(name), std::move(chart),
            [e, coords, params](const Vector& x) {
                auto [v, g] = e.eval_grad(coords, x, params);
                return ValueGrad{v, std::move(g)};
            },
            codomain);
    }

    static ScalarField parse(std::string name, ChartPtr chart, std::string_view src,
                             const std::map<std::string, double>& params = {}, Codomain codomain = Codomain::Real) {
        std::vector<std::string> declared = chart->coordinates();
        for (const auto& [k, v] : params) declared.push_back(k);
        return from_expression(std::move(name), std::move(chart), expr::Expression::parse(src, declared), params,
                               codomain);
    }

    /// Field whose gradient comes from central finite differences of its values.
    static ScalarField from_values(std::string name, ChartPtr chart, std::function<double(const Vector&)> value,
                                   Codomain codomain = Codomain::Real) {
        ChartPtr c = chart;
        return ScalarField(
            std::move(name), std::move(chart),
            [value = std::move(value), codomain, c](const Vector& x) {
                auto wrapped = [&](const Vector& y) { return value(c->wrap(y)); };
                return ValueGrad{value(x), fd_gradient(wrapped, x, codomain)};
            },
            codomain);
    }

    /// The i-th coordinate function.
    static ScalarField coordinate(const ChartPtr& chart, std::size_t i) {
        const std::size_t n = chart->dimension();
        const Codomain cd = chart->is_periodic(i) ? Codomain::Circle : Codomain::Real;
        return ScalarField(
            chart->coordinates().at(i), chart,
            [i, n](const Vector& x) {
                Vector g(n, 0.0);
                g[i] = 1.0;
                return ValueGrad{x[i], std::move(g)};
            },
            cd);
    }

    static ScalarField coordinate(const ChartPtr& chart, const std::string& name) {
        return coordinate(chart, chart->index_of(name));
    }

    const std::string& name() const noexcept { return name_; }
    const ChartPtr& chart() const noexcept { return chart_; }
    Codomain codomain() const noexcept { return codomain_; }

    ValueGrad evaluate(const Point& x) const {
        require_same_chart(chart_, x.chart(), "ScalarField::evaluate");
        return evaluate_raw(x.coords());
    }

    /// Evaluates at a raw coordinate vector (periodic entries may be unwrapped).
    ValueGrad evaluate_raw(const Vector& x) const {
        ValueGrad vg = eval_(chart_->any_periodic() ? chart_->wrap(x) : x);
        if (codomain_ == Codomain::Circle) vg.value = wrap_unit(vg.value);
        return vg;
    }

    double value(const Point& x) const { return evaluate(x).value; }
    double value_raw(const Vector& x) const { return evaluate_raw(x).value; }
    Vector gradient(const Point& x) const { return evaluate(x).gradient; }

    ScalarField renamed(std::string name) const {
        ScalarField f = *this;
        f.name_ = std::move(name);
        return f;
    }

  private:
    std::string name_;
    ChartPtr chart_;
    Evaluator eval_;
    Codomain codomain_;
};

/// c * f.
inline ScalarField scale(const ScalarField& f, double c) {
    return ScalarField(
        std::to_string(c) + "*" + f.name(), f.chart(),
        [f, c](const Vector& x) {
            ValueGrad vg = f.evaluate_raw(x);
            vg.value *= c;
            for (double& g : vg.gradient) g *= c;
            return vg;
        });
}

/// f * g (Leibniz rule on gradients).
inline ScalarField multiply(const ScalarField& f, const ScalarField& g) {
    require_same_chart(f.chart(), g.chart(), "multiply");
    return ScalarField(f.name() + "*" + g.name(), f.chart(), [f, g](const Vector& x) {
        const ValueGrad a = f.evaluate_raw(x);
        const ValueGrad b = g.evaluate_raw(x);
        ValueGrad out{a.value * b.value, Vector(x.size())};
        for (std::size_t k = 0; k < x.size(); ++k) out.gradient[k] = a.value * b.gradient[k] + b.value * a.gradient[k];
        return out;
    });
}

/// Sum of c_k f_k.
inline ScalarField linear_combination(const std::vector<ScalarField>& fs, const Vector& coeffs, std::string name) {
    if (fs.empty() || fs.size() != coeffs.size()) throw InvalidArgument("linear_combination: size mismatch");
    for (const auto& f : fs) require_same_chart(fs.front().chart(), f.chart(), "linear_combination");
    return ScalarField(std::move(name), fs.front().chart(), [fs, coeffs](const Vector& x) {
        ValueGrad out{0.0, Vector(x.size(), 0.0)};
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const ValueGrad vg = fs[i].evaluate_raw(x);
            out.value += coeffs[i] * vg.value;
            for (std::size_t k = 0; k < x.size(); ++k) out.gradient[k] += coeffs[i] * vg.gradient[k];
        }
        return out;
    });
}

/// Same values as f, gradient replaced by central finite differences.
inline ScalarField with_fd_gradient(const ScalarField& f, double rel_step = 1e-5) {
    return ScalarField(
        f.name(), f.chart(),
        [f, rel_step](const Vector& x) {
            auto value = [&](const Vector& y) { return f.value_raw(y); };
            return ValueGrad{f.value_raw(x), fd_gradient(value, x, f.codomain(), rel_step)};
        },
        f.codomain());
}

// ---------------------------------------------------------------------------
// Bivector fields
// ---------------------------------------------------------------------------

/// Antisymmetric bracket matrix P(x). The evaluator returns the strict upper
/// triangle row-major (n(n-1)/2 entries); the lower triangle is its exact negative.
class BivectorField {
  public:
    using UpperEvaluator = std::function<Vector(const Vector&)>;

    BivectorField(std::string name, ChartPtr chart, UpperEvaluator upper)
        : name_(std::move(name)), chart_(std::move(chart)), upper_(std::move(upper)) {
        if (!chart_) throw InvalidArgument("BivectorField '" + name_ + "': null chart");
    }

    /// Constant bivector from a full antisymmetric matrix (upper triangle used).
    static BivectorField constant(std::string name, ChartPtr chart, const Matrix& p) {
        const std::size_t n = chart->dimension();
        Vector up;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) up.push_back(p(i, j));
        return BivectorField(std::move(name), std::move(chart), [up](const Vector&) { return up; });
    }

    /// Sum over k of d/dq_k wedge d/dp_k for the given index pairs.
    static BivectorField canonical(std::string name, ChartPtr chart,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        Matrix p(chart->dimension(), chart->dimension(), 0.0);
        for (auto [q, mom] : pairs) {
            p(q, mom) = 1.0;
            p(mom, q) = -1.0;
        }
        return constant(std::move(name), std::move(chart), p);
    }

    /// Entries {x_i, x_j} = expression, for i < j; unspecified entries are zero.
    static BivectorField from_expressions(std::string name, ChartPtr chart,
                                          const std::vector<std::tuple<std::size_t, std::size_t, expr::Expression>>& entries,
                                          const std::map<std::string, double>& params = {}) {
        const std::size_t n = chart->dimension();
        std::vector<std::pair<std::size_t, ScalarField>> fields;
        for (const auto& [i, j, e] : entries) {
            if (!(i < j && j < n)) throw InvalidArgument("BivectorField '" + name + "': entry must satisfy i < j < n");
            const std::size_t idx = i * n - i * (i + 1) / 2 + (j - i - 1);
            fields.emplace_back(idx, ScalarField::from_expression("P", chart, e, params));
        }
        const std::size_t m = n * (n - 1) / 2;
        return BivectorField(std::move(name), std::move(chart), [fields, m](const Vector& x) {
            Vector up(m, 0.0);
            for (const auto& [idx, f] : fields) up[idx] += f.value_raw(x);
            return up;
        });
    }

    const std::string& name() const noexcept { return name_; }
    const ChartPtr& chart() const noexcept { return chart_; }

    Matrix matrix_raw(const Vector& x) const {
        const std::size_t n = chart_->dimension();
        const Vector up = upper_(chart_->any_periodic() ? chart_->wrap(x) : x);
        if (up.size() != n * (n - 1) / 2) throw InvalidArgument("BivectorField '" + name_ + "': bad upper-triangle size");
        Matrix p(n, n, 0.0);
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j, ++k) {
                p(i, j) = up[k];
                p(j, i) = -up[k];
            }
        return p;
    }

    Matrix matrix(const Point& x) const {
        require_same_chart(chart_, x.chart(), "BivectorField::matrix");
        return matrix_raw(x.coords());
    }

  private:
    std::string name_;
    ChartPtr chart_;
    UpperEvaluator upper_;
};

// ---------------------------------------------------------------------------
// Poisson calculus
// ---------------------------------------------------------------------------

/// a^T P b for antisymmetric P, summed over the upper triangle so that
/// swapping a and b negates the result exactly.
inline double quadratic_form(const Vector& a, const Matrix& p, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = i + 1; j < p.cols(); ++j)
            if (p(i, j) != 0.0) s += p(i, j) * (a[i] * b[j] - a[j] * b[i]);
    return s;
}

inline double bracket_raw(const BivectorField& pi, const ScalarField& f, const ScalarField& g, const Vector& x) {
    return quadratic_form(f.evaluate_raw(x).gradient, pi.matrix_raw(x), g.evaluate_raw(x).gradient);
}

/// {f, g}(x) = grad f^T P grad g.
inline double bracket(const BivectorField& pi, const ScalarField& f, const ScalarField& g, const Point& x) {
    require_same_chart(pi.chart(), x.chart(), "bracket");
    require_same_chart(pi.chart(), f.chart(), "bracket");
    require_same_chart(pi.chart(), g.chart(), "bracket");
    return bracket_raw(pi, f, g, x.coords());
}

inline Vector hamiltonian_vector_field_raw(const BivectorField& pi, const ScalarField& h, const Vector& x) {
    return pi.matrix_raw(x) * h.evaluate_raw(x).gradient;
}

/// X_h(x) = P(x) grad h(x).
inline Vector hamiltonian_vector_field(const BivectorField& pi, const ScalarField& h, const Point& x) {
    require_same_chart(pi.chart(), x.chart(), "hamiltonian_vector_field");
    require_same_chart(pi.chart(), h.chart(), "hamiltonian_vector_field");
    return hamiltonian_vector_field_raw(pi, h, x.coords());
}

/// Pi^sharp(alpha) = -P(x) alpha.
inline Vector sharp(const BivectorField& pi, const Vector& alpha, const Point& x) {
    require_same_chart(pi.chart(), x.chart(), "sharp");
    if (alpha.size() != x.dimension()) throw InvalidArgument("sharp: covector has wrong length");
    Vector v = pi.matrix(x) * alpha;
    for (double& c : v) c = -c;
    return v;
}

/// Vector field of the Hamiltonian flow of h, for the integrator.
inline VectorFieldFn hamiltonian_flow_field(const BivectorField& pi, const ScalarField& h) {
    require_same_chart(pi.chart(), h.chart(), "hamiltonian_flow_field");
    return [pi, h](const Vector& x) { return hamiltonian_vector_field_raw(pi, h, x); };
}

/// Flows a point along the Hamiltonian vector field of h for time t.
inline Point hamiltonian_flow(const BivectorField& pi, const ScalarField& h, const Point& x0, double t,
                              const OdeSettings& settings = {}) {
    require_same_chart(pi.chart(), x0.chart(), "hamiltonian_flow");
    return Point(x0.chart(), integrate(hamiltonian_flow_field(pi, h), x0.coords(), t, x0.chart()->periodic(), settings));
}

/// Integrates an arbitrary vector field on a chart, wrapping periodic
/// coordinates on output only.
inline Point integrate(const VectorFieldFn& vf, const Point& x0, double T, const OdeSettings& settings = {}) {
    return Point(x0.chart(), integrate(vf, x0.coords(), T, x0.chart()->periodic(), settings));
}

inline double fd_step(double xk, double rel = 1e-5) { return rel * std::max(1.0, std::abs(xk)); }

/// |{{f,g},h} + {{g,h},f} + {{h,f},g}| at x. The outer brackets differentiate
/// the inner bracket value fields by central differences.
inline double jacobi_residual(const BivectorField& pi, const Point& x, const ScalarField& f, const ScalarField& g,
                              const ScalarField& h) {
    require_same_chart(pi.chart(), x.chart(), "jacobi_residual");
    const Vector& x0 = x.coords();
    const Matrix p = pi.matrix_raw(x0);
    auto outer = [&](const ScalarField& a, const ScalarField& b, const ScalarField& c) {
        auto inner = [&](const Vector& y) { return bracket_raw(pi, a, b, y); };
        const Vector grad_inner = fd_gradient(inner, x0, Codomain::Real);
        return quadratic_form(grad_inner, p, c.evaluate_raw(x0).gradient);
    };
    return std::abs(outer(f, g, h) + outer(g, h, f) + outer(h, f, g));
}

struct JacobiSuiteResult {
    double max_relative = 0.0;
    double max_absolute = 0.0;
    std::size_t worst_i = 0, worst_j = 0, worst_k = 0;
};

/// Jacobi residual over all coordinate triples i < j < k at x, relative to
/// max(1, sum of the three cyclic term magnitudes). dP/dx is computed once by
/// central differences and reused for every triple.
inline JacobiSuiteResult jacobi_coordinate_suite(const BivectorField& pi, const Vector& x) {
    const std::size_t n = pi.chart()->dimension();
    const Matrix p = pi.matrix_raw(x);
    std::vector<Matrix> dp(n);
    Vector xp = x;
    for (std::size_t k = 0; k < n; ++k) {
        const double h = fd_step(x[k]);
        xp[k] = x[k] + h;
        const Matrix plus = pi.matrix_raw(xp);
        xp[k] = x[k] - h;
        const Matrix minus = pi.matrix_raw(xp);
        xp[k] = x[k];
        dp[k] = Matrix(n, n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) dp[k](a, b) = (plus(a, b) - minus(a, b)) / (2.0 * h);
    }
    // {{x_a, x_b}, x_c} = sum_m d_m P_ab P_mc
    auto term = [&](std::size_t a, std::size_t b, std::size_t c) {
        double s = 0.0;
        for (std::size_t m = 0; m < n; ++m) s += dp[m](a, b) * p(m, c);
        return s;
    };
    JacobiSuiteResult out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                const double t1 = term(i, j, k), t2 = term(j, k, i), t3 = term(k, i, j);
                const double abs_res = std::abs(t1 + t2 + t3);
                const double rel = abs_res / std::max(1.0, std::abs(t1) + std::abs(t2) + std::abs(t3));
                out.max_absolute = std::max(out.max_absolute, abs_res);
                if (rel > out.max_relative) {
                    out.max_relative = rel;
                    out.worst_i = i, out.worst_j = j, out.worst_k = k;
                }
            }
    return out;
}

/// Rank of P(x); antisymmetric matrices have even rank, an odd result is an error.
inline int rank_at(const BivectorField& pi, const Point& x, RankPolicy policy = {}) {
    const int r = numerical_rank(pi.matrix(x), policy);
    if (r % 2 != 0)
        throw ConvergenceError("rank_at: odd numerical rank " + std::to_string(r) + " for bivector '" + pi.name() + "'",
                               0.0);
    return r;
}

} // namespace nci
