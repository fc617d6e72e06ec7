// JSON system descriptions:
//
// {
//   "name": "lie-poisson",
//   "coordinates": ["x", "y", "z"],
//   "periodic": [false, false, false],          optional
//   "parameters": {"a": 1.0},                   optional
//   "bivector": [{"i": 0, "j": 1, "expr": "z"}, ...],
//   "functions": {"C": "x^2 + y^2 + z^2", ...},
//   "family": ["C", ...],
//   "rank": 1,
//   "regular_predicate": "x^2 + y^2 - 0.01",    optional, accepted where > 0
//   "sample_box": [[-1, 1], ...],               optional, default [-1, 1]
//   "base": {"coordinates": [...], "bivector": [...], "projection": [...]}   optional
// }
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nci/errors.hpp"
#include "nci/expr.hpp"
#include "nci/geometry.hpp"
#include "nci/nciverify.hpp"
#include "nci/systems.hpp"

namespace nci {

namespace detail {

using ojson = nlohmann::ordered_json;

inline const ojson& require_key(const ojson& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    return j.at(key);
}

inline std::vector<std::string> string_list(const ojson& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : j) {
        if (!e.is_string()) throw ConfigError(where + ": expected an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

inline expr::Expression parse_config_expr(const std::string& src, const std::vector<std::string>& declared,
                                          const std::string& where) {
    try {
        return expr::parse(src, declared);
    } catch (const ParseError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline std::vector<std::tuple<std::size_t, std::size_t, expr::Expression>>
parse_bivector_entries(const ojson& j, const std::vector<std::string>& declared, std::size_t n, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": bivector must be an array");
    std::vector<std::tuple<std::size_t, std::size_t, expr::Expression>> out;
    std::set<std::pair<long, long>> seen;
    for (const auto& e : j) {
        const auto& ji = require_key(e, "i", where + ".bivector");
        const auto& jj = require_key(e, "j", where + ".bivector");
        const auto& je = require_key(e, "expr", where + ".bivector");
        if (!ji.is_number_integer() || !jj.is_number_integer() || !je.is_string())
            throw ConfigError(where + ": bivector entries need integer i, j and string expr");
        const long i = ji.get<long>(), k = jj.get<long>();
        if (!(i < k)) throw ConfigError(where + ": bivector entry (" + std::to_string(i) + ", " + std::to_string(k) +
                                        ") must have i < j (upper triangle only)");
        if (i < 0 || k >= static_cast<long>(n))
            throw ConfigError(where + ": bivector entry (" + std::to_string(i) + ", " + std::to_string(k) +
                              ") out of range");
        if (!seen.insert({i, k}).second)
            throw ConfigError(where + ": duplicate bivector entry (" + std::to_string(i) + ", " + std::to_string(k) + ")");
        out.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(k),
                         parse_config_expr(je.get<std::string>(), declared,
                                           where + ": bivector (" + std::to_string(i) + ", " + std::to_string(k) + ")"));
    }
    return out;
}

} // namespace detail

/// Builds a system from a parsed JSON description; all problems are ConfigError.
inline SystemBundle system_from_json(const nlohmann::ordered_json& j) {
    using detail::require_key;
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    const auto& jname = require_key(j, "name", "config");
    if (!jname.is_string()) throw ConfigError("config: name must be a string");
    const std::string name = jname.get<std::string>();
    const std::string where = "config '" + name + "'";

    const auto coords = detail::string_list(require_key(j, "coordinates", where), where + ".coordinates");
    std::vector<bool> periodic(coords.size(), false);
    if (j.contains("periodic")) {
        const auto& jp = j.at("periodic");
        if (!jp.is_array() || jp.size() != coords.size())
            throw ConfigError(where + ": periodic must be an array of " + std::to_string(coords.size()) + " booleans");
        for (std::size_t k = 0; k < coords.size(); ++k) {
            if (!jp[k].is_boolean()) throw ConfigError(where + ": periodic entries must be booleans");
            periodic[k] = jp[k].get<bool>();
        }
    }
    std::map<std::string, double> params;
    if (j.contains("parameters")) {
        const auto& jp = j.at("parameters");
        if (!jp.is_object()) throw ConfigError(where + ": parameters must be an object");
        for (const auto& [k, v] : jp.items()) {
            if (!v.is_number()) throw ConfigError(where + ": parameter '" + k + "' must be a number");
            if (std::find(coords.begin(), coords.end(), k) != coords.end())
                throw ConfigError(where + ": parameter '" + k + "' shadows a coordinate");
            params[k] = v.get<double>();
        }
    }
    ChartPtr chart;
    try {
        chart = Chart::make(name, coords, periodic);
    } catch (const InvalidArgument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    std::vector<std::string> declared = coords;
    for (const auto& [k, v] : params) declared.push_back(k);
    const std::size_t n = coords.size();

    const auto entries = detail::parse_bivector_entries(require_key(j, "bivector", where), declared, n, where);
    auto pi = BivectorField::from_expressions("Pi", chart, entries, params);

    const auto& jf = require_key(j, "functions", where);
    if (!jf.is_object()) throw ConfigError(where + ": functions must be an object of name -> expression");
    std::vector<ScalarField> functions;
    for (const auto& [fname, src] : jf.items()) {
        if (!src.is_string()) throw ConfigError(where + ": function '" + fname + "' must be an expression string");
        functions.push_back(ScalarField::from_expression(
            fname, chart, detail::parse_config_expr(src.get<std::string>(), declared, where + ": function '" + fname + "'"),
            params));
    }
    auto find_function = [&](const std::string& f) -> const ScalarField& {
        for (const auto& g : functions)
            if (g.name() == f) return g;
        throw ConfigError(where + ": family member '" + f + "' is not a declared function");
    };
    const auto family_names = detail::string_list(require_key(j, "family", where), where + ".family");
    std::vector<ScalarField> family;
    for (const auto& f : family_names) family.push_back(find_function(f));
    const auto& jr = require_key(j, "rank", where);
    if (!jr.is_number_integer()) throw ConfigError(where + ": rank must be an integer");
    const long rank = jr.get<long>();
    const long s = static_cast<long>(family.size());
    if (rank != static_cast<long>(n) - s)
        throw ConfigError(where + ": rank " + std::to_string(rank) + " must equal n - s = " + std::to_string(n) + " - " +
                          std::to_string(s));
    if (2 * s < static_cast<long>(n)) throw ConfigError(where + ": family too small, need 2s >= n");
    if (rank < 1) throw ConfigError(where + ": rank must be >= 1");

    SystemBundle b{name, chart, pi};
    b.family.emplace(pi, family, static_cast<int>(rank));
    b.named_fields = functions;
    for (std::size_t k = 0; k < n; ++k) b.named_fields.push_back(ScalarField::coordinate(chart, k));

    b.plan.count = 50;
    b.plan.box = detail::uniform_box(n, -1.0, 1.0);
    for (std::size_t k = 0; k < n; ++k)
        if (periodic[k]) b.plan.box[k] = {0.0, 1.0};
    if (j.contains("sample_box")) {
        const auto& jb = j.at("sample_box");
        if (!jb.is_array() || jb.size() != n) throw ConfigError(where + ": sample_box needs one [lo, hi] per coordinate");
        for (std::size_t k = 0; k < n; ++k) {
            if (!jb[k].is_array() || jb[k].size() != 2 || !jb[k][0].is_number() || !jb[k][1].is_number())
                throw ConfigError(where + ": sample_box entries must be [lo, hi]");
            const double lo = jb[k][0].get<double>(), hi = jb[k][1].get<double>();
            if (!(lo <= hi)) throw ConfigError(where + ": sample_box entry " + std::to_string(k) + " has lo > hi");
            b.plan.box[k] = {lo, hi};
        }
    }
    if (j.contains("regular_predicate")) {
        const auto& jp = j.at("regular_predicate");
        if (!jp.is_string()) throw ConfigError(where + ": regular_predicate must be an expression string");
        const auto pred = ScalarField::from_expression(
            "regular", chart, detail::parse_config_expr(jp.get<std::string>(), declared, where + ": regular_predicate"),
            params);
        b.plan.predicate = [pred](const Point& x) {
            try {
                return pred.value(x) > 0.0;
            } catch (const DomainError&) {
                return false;
            }
        };
    }
    if (j.contains("base")) {
        const auto& jb = j.at("base");
        const std::string bw = where + ".base";
        const auto bcoords = detail::string_list(require_key(jb, "coordinates", bw), bw + ".coordinates");
        ChartPtr bchart;
        try {
            bchart = Chart::make(name + "-base", bcoords);
        } catch (const InvalidArgument& e) {
            throw ConfigError(bw + ": " + e.what());
        }
        std::vector<std::string> bdeclared = bcoords;
        for (const auto& [k, v] : params) bdeclared.push_back(k);
        const auto bentries = detail::parse_bivector_entries(require_key(jb, "bivector", bw), bdeclared, bcoords.size(), bw);
        const auto proj_src = detail::string_list(require_key(jb, "projection", bw), bw + ".projection");
        if (proj_src.size() != bcoords.size())
            throw ConfigError(bw + ": projection needs one expression per base coordinate");
        std::vector<ScalarField> proj;
        for (std::size_t k = 0; k < proj_src.size(); ++k)
            proj.push_back(ScalarField::from_expression(
                bcoords[k], chart, detail::parse_config_expr(proj_src[k], declared, bw + ".projection"), params));
        b.base = BaseRecord{BivectorField::from_expressions("pi", bchart, bentries, params), [proj](const Vector& x) {
                                Vector out;
                                for (const auto& f : proj) out.push_back(f.value_raw(x));
                                return out;
                            }};
    }
    b.lattice_point = [chart, plan = b.plan](std::uint64_t seed) {
        return draw_samples(chart, plan.with_seed(seed).with_count(1), "lattice-base").front();
    };
    b.compact_fibers = std::find(periodic.begin(), periodic.end(), true) != periodic.end();
    b.notes = "loaded from configuration";
    return b;
}

inline SystemBundle load_system_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "': invalid JSON: " + e.what());
    }
    return system_from_json(j);
}

} // namespace nci
