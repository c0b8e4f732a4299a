// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "CLI11.hpp"
#include "fsilab/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Spring-mounted body in a viscous stream: steady states, thresholds, modes, transients, bifurcation"};
    app.require_subcommand(1, 1);
    std::string config;
    fsilab::CliOverrides ov;
    std::string out;
    int jobs = 0;
    long long seed = -1;
    app.add_option("--config", config, "Run configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out, "Output directory (overrides run.out_dir)");
    app.add_option("--jobs", jobs, "Worker threads for per-lambda work")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Random seed for iterative eigensolvers")->check(CLI::Range(0LL, 4294967295LL));
    for (const auto& name : fsilab::command_names()) app.add_subcommand(name)->fallthrough();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : fsilab::kExitValidation;
    }
    if (!out.empty()) ov.out_dir = out;
    if (jobs > 0) ov.jobs = jobs;
    if (seed >= 0) ov.seed = static_cast<unsigned>(seed);
    const std::string command = app.get_subcommands().front()->get_name();
    return fsilab::run_command(command, config, ov, std::cout, std::cerr);
}
