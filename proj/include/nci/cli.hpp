// Orchestration behind the command-line tool: verify, lattice and flow runs
// producing JSON reports.
#pragma once

#include <chrono>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nci/config.hpp"
#include "nci/errors.hpp"
#include "nci/nciverify.hpp"
#include "nci/systems.hpp"
#include "nci/torusflow.hpp"

namespace nci::cli {

inline constexpr const char* kToolVersion = "0.1.0";

using json = nlohmann::ordered_json;

struct RunOptions {
    std::string system;      ///< registered name (ignored when config is set)
    std::string config;      ///< path to a JSON system description
    SystemParams params;     ///< --param NAME=VALUE
    std::uint64_t seed = 1;
    std::optional<std::size_t> samples;
    std::map<std::string, double> tolerances; ///< --tol NAME=VALUE
    unsigned workers = 1;
    bool timing = false;
    // lattice / flow
    std::optional<Vector> point;
    std::string field;
    double T = 1.0;
};

struct RunResult {
    json report;
    int exit_code = 0;
};

inline SystemBundle resolve_system(const RunOptions& opt) {
    if (!opt.config.empty()) {
        if (!opt.params.empty()) throw ConfigError("--param is not supported together with --config");
        return load_system_config(opt.config);
    }
    if (opt.system.empty()) throw ConfigError("one of --system or --config is required");
    try {
        return make_system(opt.system, opt.params);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

/// Residuals are kept finite in reports; non-finite values become DBL_MAX.
inline double finite_or_max(double v) { return std::isfinite(v) ? v : DBL_MAX; }

inline json vector_json(const Vector& v) {
    json a = json::array();
    for (double x : v) a.push_back(finite_or_max(x));
    return a;
}

inline json check_json(const CheckResult& c) {
    json j;
    j["name"] = c.name;
    j["pass"] = c.pass;
    j["max_residual"] = finite_or_max(c.max_residual);
    j["tolerance"] = c.tolerance;
    j["worst_point"] = vector_json(c.worst_point);
    std::string note = c.note;
    if (!std::isfinite(c.max_residual) && note.empty()) note = "error: non-finite residual";
    if (!note.empty()) j["note"] = note;
    return j;
}

inline json report_header(const SystemBundle& b, const RunOptions& opt, std::size_t samples) {
    json j;
    j["tool_version"] = kToolVersion;
    j["system"] = b.name;
    j["seed"] = opt.seed;
    j["samples"] = samples;
    return j;
}

inline double tol_for(const RunOptions& opt, const std::string& name, double fallback) {
    const auto it = opt.tolerances.find(name);
    return it == opt.tolerances.end() ? fallback : it->second;
}

inline void finish(json& report, const std::vector<CheckResult>& checks, const RunOptions& opt,
                   std::chrono::steady_clock::time_point start, int& exit_code) {
    json arr = json::array();
    bool all = true;
    for (const auto& c : checks) {
        arr.push_back(check_json(c));
        all = all && c.pass;
    }
    report["checks"] = arr;
    if (opt.timing)
        report["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    else
        report["wall_time_s"] = nullptr;
    if (exit_code == 0 && !all) exit_code = 1;
}

/// Full verification suite: Jacobi, NCI axioms, Casimirs, rank drop,
/// completeness, angle relations and system-specific checks.
inline RunResult run_verify(const RunOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    const SystemBundle b = resolve_system(opt);
    const std::vector<std::string> known{"jacobi",      "involution", "regularity",      "casimir",
                                         "rank_drop",   "completeness", "angle_relations"};
    for (const auto& [k, v] : opt.tolerances) {
        bool ok = std::find(known.begin(), known.end(), k) != known.end();
        for (const auto& c : b.extra_checks) ok = ok || c.name == k;
        if (!ok) throw ConfigError("--tol: unknown check '" + k + "'");
        if (!(v > 0.0)) throw ConfigError("--tol: tolerance for '" + k + "' must be > 0");
    }
    SamplePlan plan = b.plan.with_seed(opt.seed);
    if (opt.samples) {
        if (*opt.samples < 1) throw ConfigError("--samples must be >= 1");
        plan.count = *opt.samples;
    }
    plan.workers = opt.workers;
    const double field_tol = b.fd_fields ? 1e-5 : 1e-8;

    std::vector<CheckResult> checks;
    auto run = [&](const std::string& name, double tol, const std::function<CheckResult()>& body) {
        CheckResult c = guarded_check(name, tol, body);
        c.name = name;
        checks.push_back(std::move(c));
    };
    const double jt = tol_for(opt, "jacobi", 1e-7);
    run("jacobi", jt, [&] { return jacobi_check(b.pi, plan, jt); });
    if (b.family) {
        const NciFamily& fam = *b.family;
        const double it = tol_for(opt, "involution", field_tol);
        run("involution", it, [&] { return involution_residuals(fam, plan, it).check; });
        run("regularity", 0.0, [&] { return regularity_suite(fam, plan); });
        if (!b.casimirs.empty()) {
            const double ct = tol_for(opt, "casimir", field_tol);
            run("casimir", ct, [&] { return casimir_check(b.pi, b.casimirs, plan, ct); });
        }
        if (b.base) run("rank_drop", 0.0, [&] { return rank_drop_check(fam, *b.base, plan); });
        // differentiates a bracket field by finite differences on every system
        const double kt = tol_for(opt, "completeness", 1e-5);
        run("completeness", kt, [&] { return completeness_spotcheck(fam, plan, kt); });
    }
    if (!b.angles.empty()) {
        const double at = tol_for(opt, "angle_relations", b.fd_fields ? 1e-4 : 1e-8);
        run("angle_relations", at, [&] {
            auto res = angle_relation_check(b.pi, b.actions, b.angles, plan, at);
            std::string o;
            for (int s : res.orientation) o += (o.empty() ? "" : ",") + std::string(s < 0 ? "-1" : "+1");
            res.check.note = "orientation=" + o;
            return res.check;
        });
    }
    for (const auto& extra : b.extra_checks) {
        const double et = tol_for(opt, extra.name, extra.tolerance);
        run(extra.name, et, [&] {
            CheckResult c = extra.run(opt.seed, plan.count, opt.workers);
            c.tolerance = et;
            c.pass = c.max_residual <= et;
            return c;
        });
    }
    RunResult out{report_header(b, opt, plan.count), 0};
    if (!b.recorded.empty()) {
        json rec;
        for (const auto& [k, v] : b.recorded) rec[k] = v;
        out.report["recorded"] = rec;
    }
    finish(out.report, checks, opt, start, out.exit_code);
    return out;
}

inline Point base_point(const SystemBundle& b, const RunOptions& opt) {
    if (opt.point) {
        if (opt.point->size() != b.chart->dimension())
            throw ConfigError("--point needs " + std::to_string(b.chart->dimension()) + " coordinates");
        return Point(b.chart, *opt.point);
    }
    if (!b.lattice_point) throw ConfigError("system '" + b.name + "' has no default base point; pass --point");
    return b.lattice_point(opt.seed);
}

inline json matrix_columns_json(const Matrix& m) {
    json cols = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) cols.push_back(vector_json(m.column(j)));
    return cols;
}

/// Detects the action lattice of the first r family functions at a base point.
inline RunResult run_lattice(const RunOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    const SystemBundle b = resolve_system(opt);
    if (!b.family || !b.compact_fibers)
        throw ConfigError("system '" + b.name + "' has no family with compact fibers; lattice detection needs one");
    for (const auto& [k, v] : opt.tolerances)
        if (k != "return") throw ConfigError("--tol: lattice accepts only 'return'");
    FlowProbe probe;
    probe.seed = opt.seed;
    probe.return_tol = tol_for(opt, "return", 1e-6);
    RunResult out{report_header(b, opt, 1), 0};
    std::vector<CheckResult> checks;
    Point m = [&] {
        try {
            return base_point(b, opt);
        } catch (const SamplerExhausted& e) {
            throw ConfigError(e.what());
        }
    }();
    CheckResult c{"lattice", false, DBL_MAX, probe.return_tol, m.coords(), {}};
    json lat;
    lat["fields"] = json::array();
    for (const auto& f : b.lattice_fields()) lat["fields"].push_back(f.name());
    lat["base_point"] = vector_json(m.coords());
    try {
        const LatticeBasis L = detect_lattice(b.pi, b.lattice_fields(), m, probe);
        lat["basis"] = matrix_columns_json(L.T);
        lat["det"] = L.det;
        lat["residuals"] = vector_json(L.residuals);
        c.max_residual = *std::max_element(L.residuals.begin(), L.residuals.end());
        c.pass = c.max_residual <= probe.return_tol;
    } catch (const LatticeError& e) {
        json partial = json::array();
        for (const auto& v : e.partial_basis()) partial.push_back(vector_json(v));
        lat["partial_basis"] = partial;
        c.note = std::string("error: ") + e.what();
    } catch (const Error& e) {
        if (dynamic_cast<const InvalidArgument*>(&e)) throw;
        c.note = std::string("error: ") + e.what();
    }
    checks.push_back(c);
    out.report["lattice"] = lat;
    finish(out.report, checks, opt, start, out.exit_code);
    return out;
}

/// Flows a named field for time T and reports the endpoint and conserved drifts.
inline RunResult run_flow(const RunOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    const SystemBundle b = resolve_system(opt);
    if (opt.field.empty()) throw ConfigError("flow needs --field");
    if (!std::isfinite(opt.T)) throw ConfigError("--T must be finite");
    for (const auto& [k, v] : opt.tolerances)
        if (k != "conservation" && k != "angle_advance")
            throw ConfigError("--tol: flow accepts only 'conservation' and 'angle_advance'");
    const ScalarField& h = [&]() -> const ScalarField& {
        try {
            return b.field(opt.field);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }();
    const Point x0 = [&] {
        try {
            return base_point(b, opt);
        } catch (const SamplerExhausted& e) {
            throw ConfigError(e.what());
        }
    }();
    RunResult out{report_header(b, opt, 1), 0};
    std::vector<CheckResult> checks;
    json flow;
    flow["field"] = h.name();
    flow["T"] = opt.T;
    flow["start"] = vector_json(x0.coords());
    const double ctol = tol_for(opt, "conservation", b.fd_fields ? 1e-7 : 1e-8);
    try {
        const Point xt = hamiltonian_flow(b.pi, h, x0, opt.T);
        flow["end"] = vector_json(xt.coords());
        flow["return_distance"] = b.chart->distance(xt.coords(), x0.coords());
        std::vector<ScalarField> watch;
        if (b.family) watch = b.family->fields;
        for (const auto& c : b.casimirs)
            if (std::none_of(watch.begin(), watch.end(), [&](const ScalarField& w) { return w.name() == c.name(); }))
                watch.push_back(c);
        json drift;
        double worst = 0.0;
        for (const auto& f : watch) {
            const double d = std::abs(f.value(xt) - f.value(x0));
            drift[f.name()] = finite_or_max(d);
            worst = std::max(worst, d);
        }
        flow["drift"] = drift;
        if (!watch.empty()) checks.push_back({"conservation", worst <= ctol, worst, ctol, x0.coords(), {}});
        for (std::size_t k = 0; k < b.actions.size(); ++k) {
            if (b.actions[k].name() != h.name()) continue;
            const ScalarField& angle = b.angles.at(k);
            const int o = bracket(b.pi, angle, h, x0) < 0.0 ? -1 : 1;
            const double r = std::abs(wrap_half(angle.value(xt) - angle.value(x0) - o * opt.T));
            const double atol = tol_for(opt, "angle_advance", b.fd_fields ? 1e-5 : 1e-8);
            CheckResult c{"angle_advance", r <= atol, r, atol, x0.coords(), "angle=" + angle.name()};
            checks.push_back(c);
        }
    } catch (const IntegrationError& e) {
        checks.push_back({"integration", false, DBL_MAX, 0.0, x0.coords(), std::string("error: ") + e.what()});
    } catch (const Error& e) {
        if (dynamic_cast<const InvalidArgument*>(&e)) throw;
        checks.push_back({"flow", false, DBL_MAX, 0.0, x0.coords(), std::string("error: ") + e.what()});
    }
    out.report["flow"] = flow;
    finish(out.report, checks, opt, start, out.exit_code);
    return out;
}

/// Text projection of a JSON report.
inline std::string to_text(const json& report) {
    std::ostringstream os;
    os << "system " << report.at("system").get<std::string>() << " (seed " << report.at("seed").dump() << ", samples "
       << report.at("samples").dump() << ")\n";
    for (const auto& c : report.at("checks")) {
        os << "  " << (c.at("pass").get<bool>() ? "PASS " : "FAIL ") << c.at("name").get<std::string>()
           << "  max_residual=" << c.at("max_residual").dump() << "  tolerance=" << c.at("tolerance").dump();
        if (c.contains("note")) os << "  " << c.at("note").get<std::string>();
        os << "\n";
    }
    if (report.contains("lattice")) os << "  lattice " << report.at("lattice").dump() << "\n";
    if (report.contains("flow")) os << "  flow " << report.at("flow").dump() << "\n";
    if (report.contains("recorded")) os << "  recorded " << report.at("recorded").dump() << "\n";
    if (!report.at("wall_time_s").is_null()) os << "  wall_time_s " << report.at("wall_time_s").dump() << "\n";
    return os.str();
}

} // namespace nci::cli
