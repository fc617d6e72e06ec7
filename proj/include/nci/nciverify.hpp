// Pointwise verification of the NCI axioms and related structural identities
// on seeded samples.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "nci/errors.hpp"
#include "nci/geometry.hpp"
#include "nci/random.hpp"

namespace nci {

/// (f_1, ..., f_s) together with the bivector and the declared rank r = n - s.
struct NciFamily {
    BivectorField pi;
    std::vector<ScalarField> fields;
    int rank = 0;

    NciFamily(BivectorField bivector, std::vector<ScalarField> fs, int r)
        : pi(std::move(bivector)), fields(std::move(fs)), rank(r) {
        validate();
    }

    std::size_t n() const { return pi.chart()->dimension(); }
    std::size_t s() const { return fields.size(); }
    std::size_t r() const { return static_cast<std::size_t>(rank); }

    std::vector<ScalarField> hamiltonians() const { return {fields.begin(), fields.begin() + rank}; }

    void validate() const {
        const auto n_ = static_cast<long>(n());
        const auto s_ = static_cast<long>(s());
        if (rank < 1) throw InvalidArgument("NciFamily: rank must be >= 1");
        if (rank != n_ - s_)
            throw InvalidArgument("NciFamily: rank " + std::to_string(rank) + " != n - s = " + std::to_string(n_ - s_));
        if (2 * s_ < n_) throw InvalidArgument("NciFamily: need 2s >= n");
        for (const auto& f : fields) require_same_chart(pi.chart(), f.chart(), "NciFamily");
    }
};

/// Seeded rejection sampler over a coordinate box.
struct SamplePlan {
    std::uint64_t seed = 0;
    std::size_t count = 50;
    std::vector<std::pair<double, double>> box;
    std::function<bool(const Point&)> predicate;
    /// Optional replacement for uniform box draws.
    std::function<Vector(Rng&)> generator;
    unsigned workers = 1;

    SamplePlan with_seed(std::uint64_t s) const {
        SamplePlan p = *this;
        p.seed = s;
        return p;
    }
    SamplePlan with_count(std::size_t c) const {
        SamplePlan p = *this;
        p.count = c;
        return p;
    }
};

/// Draws plan.count accepted points from the substream (plan.seed, stream).
inline std::vector<Point> draw_samples(const ChartPtr& chart, const SamplePlan& plan, std::string_view stream) {
    if (plan.count < 1) throw InvalidArgument("SamplePlan: count must be >= 1");
    if (!plan.generator && plan.box.size() != chart->dimension())
        throw InvalidArgument("SamplePlan: box has " + std::to_string(plan.box.size()) + " entries, chart '" +
                              chart->name() + "' needs " + std::to_string(chart->dimension()));
    for (const auto& [lo, hi] : plan.box)
        if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) throw InvalidArgument("SamplePlan: invalid box");
    Rng rng = Rng::substream(plan.seed, stream);
    std::vector<Point> out;
    out.reserve(plan.count);
    const std::size_t budget = 100 * plan.count;
    for (std::size_t draw = 0; draw < budget && out.size() < plan.count; ++draw) {
        Vector x;
        if (plan.generator) {
            x = plan.generator(rng);
        } else {
            x.resize(chart->dimension());
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.uniform(plan.box[k].first, plan.box[k].second);
        }
        Point p(chart, std::move(x));
        if (!plan.predicate || plan.predicate(p)) out.push_back(std::move(p));
    }
    if (out.size() < plan.count)
        throw SamplerExhausted("sampler '" + std::string(stream) + "' accepted " + std::to_string(out.size()) + " of " +
                               std::to_string(plan.count) + " points after " + std::to_string(budget) + " draws");
    return out;
}

/// Evaluates fn(k) for k in [0, count) on up to `workers` threads. Results are
/// stored by index so any later reduction is independent of scheduling.
template <typename R, typename F>
std::vector<R> parallel_map(std::size_t count, unsigned workers, F&& fn) {
    std::vector<R> out(count);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
    if (workers == 1) {
        for (std::size_t k = 0; k < count; ++k) out[k] = fn(k);
        return out;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w)
        threads.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < count; k += workers) out[k] = fn(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    double max_residual = 0.0;
    double tolerance = 0.0;
    Vector worst_point;
    std::string note;
};

using VerifyReport = std::vector<CheckResult>;

/// Max-reduction of per-sample residuals; ties keep the lowest sample index.
inline CheckResult reduce_max(std::string name, const std::vector<Point>& samples, const Vector& residuals,
                              double tolerance) {
    CheckResult c;
    c.name = std::move(name);
    c.tolerance = tolerance;
    std::size_t worst = 0;
    for (std::size_t k = 0; k < residuals.size(); ++k) {
        const double r = std::isnan(residuals[k]) ? std::numeric_limits<double>::infinity() : residuals[k];
        if (k == 0 || r > c.max_residual) {
            c.max_residual = r;
            worst = k;
        }
    }
    if (!samples.empty()) c.worst_point = samples[worst].coords();
    c.pass = c.max_residual <= tolerance;
    return c;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

struct InvolutionResult {
    Matrix residuals; ///< s x s, entry (i, j) = max |{f_i, f_j}| over samples
    CheckResult check;
};

/// Max |{f_i, f_j}| over samples; only rows i < r count toward pass.
inline InvolutionResult involution_residuals(const NciFamily& fam, const SamplePlan& plan, double tol = 1e-8) {
    const auto samples = draw_samples(fam.pi.chart(), plan, "involution");
    const std::size_t s = fam.s();
    const auto per_point = parallel_map<Matrix>(samples.size(), plan.workers, [&](std::size_t k) {
        const Vector& x = samples[k].coords();
        const Matrix p = fam.pi.matrix_raw(x);
        std::vector<Vector> grads;
        for (const auto& f : fam.fields) grads.push_back(f.evaluate_raw(x).gradient);
        Matrix m(s, s, 0.0);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = i + 1; j < s; ++j) {
                const double b = std::abs(quadratic_form(grads[i], p, grads[j]));
                m(i, j) = b;
                m(j, i) = b;
            }
        return m;
    });
    InvolutionResult out{Matrix(s, s, 0.0), {}};
    Vector row_max(samples.size(), 0.0);
    for (std::size_t k = 0; k < samples.size(); ++k)
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
                out.residuals(i, j) = std::max(out.residuals(i, j), per_point[k](i, j));
                if (i < fam.r()) row_max[k] = std::max(row_max[k], per_point[k](i, j));
            }
    out.check = reduce_max("involution", samples, row_max, tol);
    return out;
}

struct RegularityRecord {
    int rank_df = 0;
    int rank_ham = 0;
    bool pass = false;
};

/// Independence of the differentials and of the first r Hamiltonian fields at x.
inline RegularityRecord regularity_check(const NciFamily& fam, const Point& x, RankPolicy policy = {}) {
    require_same_chart(fam.pi.chart(), x.chart(), "regularity_check");
    const std::size_t n = fam.n();
    Matrix df(n, fam.s());
    Matrix ham(n, fam.r());
    const Matrix p = fam.pi.matrix(x);
    for (std::size_t j = 0; j < fam.s(); ++j) {
        const Vector g = fam.fields[j].evaluate(x).gradient;
        df.set_column(j, g);
        if (j < fam.r()) ham.set_column(j, p * g);
    }
    RegularityRecord rec;
    rec.rank_df = numerical_rank(df, policy);
    rec.rank_ham = numerical_rank(ham, policy);
    rec.pass = rec.rank_df == static_cast<int>(fam.s()) && rec.rank_ham == static_cast<int>(fam.r());
    return rec;
}

/// Fraction of samples failing regularity_check (pass iff zero).
inline CheckResult regularity_suite(const NciFamily& fam, const SamplePlan& plan) {
    const auto samples = draw_samples(fam.pi.chart(), plan, "regularity");
    const auto recs = parallel_map<RegularityRecord>(samples.size(), plan.workers,
                                                     [&](std::size_t k) { return regularity_check(fam, samples[k]); });
    Vector fail(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) fail[k] = recs[k].pass ? 0.0 : 1.0;
    CheckResult c = reduce_max("regularity", samples, fail, 0.0);
    const double failed = std::count(fail.begin(), fail.end(), 1.0);
    c.max_residual = failed / static_cast<double>(samples.size());
    c.pass = failed == 0;
    if (!c.pass) {
        std::size_t k = static_cast<std::size_t>(std::find(fail.begin(), fail.end(), 1.0) - fail.begin());
        c.note = "first failure: rank_df=" + std::to_string(recs[k].rank_df) +
                 " rank_ham=" + std::to_string(recs[k].rank_ham);
    }
    return c;
}

/// Max over samples of |P(x) grad f(x)|.
inline double casimir_residual(const BivectorField& pi, const ScalarField& f, const SamplePlan& plan,
                               Vector* worst = nullptr) {
    const auto samples = draw_samples(pi.chart(), plan, "casimir");
    const Vector res = parallel_map<double>(samples.size(), plan.workers, [&](std::size_t k) {
        return norm(hamiltonian_vector_field(pi, f, samples[k]));
    });
    const CheckResult c = reduce_max("casimir", samples, res, 0.0);
    if (worst) *worst = c.worst_point;
    return c.max_residual;
}

inline CheckResult casimir_check(const BivectorField& pi, const std::vector<ScalarField>& casimirs,
                                 const SamplePlan& plan, double tol) {
    CheckResult c{"casimir", true, 0.0, tol, {}, {}};
    for (const auto& f : casimirs) {
        Vector worst;
        const double r = casimir_residual(pi, f, plan, &worst);
        if (r > c.max_residual || c.worst_point.empty()) {
            c.max_residual = std::max(c.max_residual, r);
            c.worst_point = worst;
        }
    }
    c.pass = c.max_residual <= tol;
    return c;
}

/// Base space of an NCI system: chart, bivector pi on it and the projection.
struct BaseRecord {
    BivectorField pi;
    std::function<Vector(const Vector&)> projection;
};

/// rank(pi at phi(m)) == rank(Pi at m) - 2r at every sample; the residual is
/// the largest absolute mismatch.
inline CheckResult rank_drop_check(const NciFamily& fam, const BaseRecord& base, const SamplePlan& plan) {
    const auto samples = draw_samples(fam.pi.chart(), plan, "rank_drop");
    const Vector res = parallel_map<double>(samples.size(), plan.workers, [&](std::size_t k) {
        const int top = rank_at(fam.pi, samples[k]);
        const Point b(base.pi.chart(), base.projection(samples[k].coords()));
        const int bottom = rank_at(base.pi, b);
        return std::abs(static_cast<double>(bottom - (top - 2 * fam.rank)));
    });
    return reduce_max("rank_drop", samples, res, 0.0);
}

/// X_{f_i}({g,h}) for g, h drawn from the extra functions f_{r+1..s} and their
/// pairwise products, relative to max(1, |{g,h}|). The bracket field is
/// differentiated along X_{f_i} with a five-point central stencil.
inline CheckResult completeness_spotcheck(const NciFamily& fam, const SamplePlan& plan, double tol,
                                          double rel_step = 1e-4) {
    std::vector<ScalarField> pool(fam.fields.begin() + fam.rank, fam.fields.end());
    const std::size_t extras = pool.size();
    for (std::size_t a = 0; a < extras; ++a)
        for (std::size_t b = a; b < extras; ++b) pool.push_back(multiply(pool[a], pool[b]));
    const auto samples = draw_samples(fam.pi.chart(), plan, "completeness");
    const Vector res = parallel_map<double>(samples.size(), plan.workers, [&](std::size_t k) {
        const Vector& x = samples[k].coords();
        double worst = 0.0;
        for (std::size_t i = 0; i < fam.r(); ++i) {
            const Vector xi = hamiltonian_vector_field_raw(fam.pi, fam.fields[i], x);
            const double speed = norm(xi);
            if (speed == 0.0) continue;
            const double eps = rel_step * std::max(1.0, norm(x)) / speed;
            for (std::size_t a = 0; a < pool.size(); ++a)
                for (std::size_t b = a + 1; b < pool.size(); ++b) {
                    auto at = [&](double t) { return bracket_raw(fam.pi, pool[a], pool[b], axpy(t * eps, xi, x)); };
                    const double d = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * eps);
                    worst = std::max(worst, std::abs(d) / std::max(1.0, std::abs(at(0.0))));
                }
        }
        return worst;
    });
    return reduce_max("completeness", samples, res, tol);
}

/// Jacobi suite over coordinate triples at seeded samples (relative residual).
inline CheckResult jacobi_check(const BivectorField& pi, const SamplePlan& plan, double tol = 1e-7) {
    const auto samples = draw_samples(pi.chart(), plan, "jacobi");
    const Vector res = parallel_map<double>(samples.size(), plan.workers, [&](std::size_t k) {
        return jacobi_coordinate_suite(pi, samples[k].coords()).max_relative;
    });
    return reduce_max("jacobi", samples, res, tol);
}

/// Runs `body`, turning numerical exceptions into a failed check.
inline CheckResult guarded_check(const std::string& name, double tol, const std::function<CheckResult()>& body) {
    try {
        return body();
    } catch (const InvalidArgument&) {
        throw;
    } catch (const std::exception& e) {
        CheckResult c;
        c.name = name;
        c.pass = false;
        c.max_residual = std::numeric_limits<double>::max();
        c.tolerance = tol;
        c.note = std::string("error: ") + e.what();
        return c;
    }
}

} // namespace nci
