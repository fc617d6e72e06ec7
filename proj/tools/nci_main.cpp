// nci: verify NCI systems, detect action lattices, run Hamiltonian flows.
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nci/cli.hpp"

namespace {

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* flag) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw nci::ConfigError(std::string(flag) + " expects NAME=VALUE, got '" + s + "'");
    return {s.substr(0, eq), s.substr(eq + 1)};
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw nci::ConfigError(what + ": not a number: '" + s + "'");
    }
}

nci::Vector parse_point(const std::string& s) {
    nci::Vector v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(parse_double(item, "--point"));
    if (v.empty()) throw nci::ConfigError("--point is empty");
    return v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical workbench for Poisson manifolds and non-commutative integrable systems"};
    app.require_subcommand(1, 1);

    std::string system, config, format = "json", out_path, point, potential;
    std::uint64_t seed = 1;
    std::size_t samples = 0;
    std::vector<std::string> tols, params;
    int n = 0;
    unsigned workers = 1;
    bool timing = false;
    std::string field;
    double T = 1.0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--system", system, "built-in system name");
        sub->add_option("--config", config, "JSON system description");
        sub->add_option("--seed", seed, "64-bit seed");
        sub->add_option("--samples", samples, "number of accepted sample points");
        sub->add_option("--tol", tols, "tolerance override NAME=VALUE")->take_all();
        sub->add_option("--param", params, "system parameter NAME=VALUE")->take_all();
        sub->add_option("--format", format, "json or text")->check(CLI::IsMember({"json", "text"}));
        sub->add_option("--out", out_path, "write the report here instead of stdout");
        sub->add_option("--n", n, "matrix size for gelfand-cetlin");
        sub->add_option("--potential", potential, "central-force potential V(r)");
        sub->add_option("--workers", workers, "worker threads");
        sub->add_option("--point", point, "comma-separated chart coordinates");
        sub->add_flag("--timing", timing, "record wall time in the report");
    };
    auto* verify = app.add_subcommand("verify", "run the verification suite");
    auto* lattice = app.add_subcommand("lattice", "detect the action lattice at a base point");
    auto* flow = app.add_subcommand("flow", "flow a named field");
    common(verify);
    common(lattice);
    common(flow);
    flow->add_option("--field", field, "field to flow")->required();
    flow->add_option("--T", T, "flow time");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        nci::cli::RunOptions opt;
        opt.system = system;
        opt.config = config;
        opt.seed = seed;
        if (samples > 0) opt.samples = samples;
        opt.workers = workers;
        opt.timing = timing;
        opt.field = field;
        opt.T = T;
        for (const auto& t : tols) {
            const auto [k, v] = split_assignment(t, "--tol");
            opt.tolerances[k] = parse_double(v, "--tol " + k);
        }
        for (const auto& p : params) {
            const auto [k, v] = split_assignment(p, "--param");
            opt.params[k] = v;
        }
        if (n > 0) opt.params["n"] = std::to_string(n);
        if (!potential.empty()) opt.params["V"] = potential;
        if (!point.empty()) opt.point = parse_point(point);

        nci::cli::RunResult result;
        if (verify->parsed())
            result = nci::cli::run_verify(opt);
        else if (lattice->parsed())
            result = nci::cli::run_lattice(opt);
        else
            result = nci::cli::run_flow(opt);

        const std::string text = format == "json" ? result.report.dump(2) + "\n" : nci::cli::to_text(result.report);
        if (out_path.empty()) {
            std::cout << text;
        } else {
            std::ofstream out(out_path, std::ios::binary);
            if (!out) throw nci::ConfigError("cannot write '" + out_path + "'");
            out << text;
        }
        return result.exit_code;
    } catch (const nci::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nci::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
