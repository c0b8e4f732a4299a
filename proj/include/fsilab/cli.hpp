// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsilab/config.hpp"

namespace fsilab {

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitSolver = 3, kExitNumeric = 4 };

/// Global flags; when set they override the matching [run] entries of the config.
struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<int> jobs;
    std::optional<unsigned> seed;
};

const std::vector<std::string>& command_names();

/// Loads the config, applies overrides and runs one command. Never throws; errors map to exit codes.
int run_command(const std::string& command, const std::string& config_path, const CliOverrides& overrides,
                std::ostream& out, std::ostream& err);

/// Same with an already parsed config.
int run_command(const std::string& command, RunConfig config, std::ostream& out, std::ostream& err);

int cmd_mesh(const RunConfig& config, std::ostream& out);
int cmd_steady(const RunConfig& config, std::ostream& out);
int cmd_thresholds(const RunConfig& config, std::ostream& out);
int cmd_modes(const RunConfig& config, std::ostream& out);
int cmd_transient(const RunConfig& config, std::ostream& out);
int cmd_bifurcate(const RunConfig& config, std::ostream& out);

/// Name of the run manifest written by `command` into the output directory.
std::string manifest_name(const std::string& command);

/// Recomputes the checksums listed in a run manifest; returns the paths that do not match.
std::vector<std::string> verify_manifest(const std::string& manifest_path);

}  // namespace fsilab
