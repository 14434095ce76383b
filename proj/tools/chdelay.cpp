// chdelay: delay-scheme solver and estimate auditor for the coupled
// chemical-potential / order-parameter system.
//
//   chdelay solve  <config>
//   chdelay study  <config> --levels k
//   chdelay verify <dir> [--audits a,b,c]
//
// Exit codes: 0 pass, 2 audit failure, 3 solver failure, 4 config error.
// CHD_OUTPUT_DIR overrides the configured output directory.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chd/driver.hpp"

namespace {

chd::RunConfig load_config(const std::string& path) {
    chd::RunConfig cfg = chd::parse_config(chd::read_text(path));
    if (const char* env = std::getenv("CHD_OUTPUT_DIR"); env && *env) cfg.out_dir = env;
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (std::getline(iss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"delay-scheme solver with discrete energy-estimate audits"};
    app.require_subcommand(1);

    std::string config_path, verify_dir, audits_csv;
    int levels = 3;

    auto* cmd_solve = app.add_subcommand("solve", "run one solve and audit it");
    cmd_solve->add_option("config", config_path, "run configuration file")->required();

    auto* cmd_study = app.add_subcommand("study", "tau-refinement Cauchy study");
    cmd_study->add_option("config", config_path, "run configuration file")->required();
    cmd_study->add_option("--levels", levels, "number of refinement levels (>= 2)");

    auto* cmd_verify = app.add_subcommand("verify", "recompute audits from saved artifacts");
    cmd_verify->add_option("dir", verify_dir, "trajectory directory")->required();
    cmd_verify->add_option("--audits", audits_csv, "comma-separated audit names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cout << chd::error_json("ParseError", e.what()) << "\n";
        return chd::kExitConfigError;
    }

    try {
        if (cmd_solve->parsed()) return chd::run_solve(load_config(config_path), std::cout);
        if (cmd_study->parsed())
            return chd::run_study(load_config(config_path), levels, std::cout);
        return chd::run_verify(verify_dir, split_csv(audits_csv), std::cout);
    } catch (const chd::Error& e) {
        std::cout << chd::error_json(e.code(), e.what()) << "\n";
        return chd::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cout << chd::error_json("Internal", e.what()) << "\n";
        return chd::kExitSolverFailure;
    }
}
