// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fsilab/space.hpp"

namespace fsilab {

/// Scalar or array value of the key/value config format.
using ConfigValue = std::variant<double, bool, std::string, std::vector<double>>;

/// Parsed `[section]` / `key = value` document. Keys outside any section live in section "".
struct ConfigDocument {
    std::map<std::string, std::map<std::string, ConfigValue>> sections;
    std::map<std::string, int> lines;  // "section.key" -> line number
};

/// Parses the TOML subset: comments, sections, strings, numbers (incl. inf), booleans, flat number arrays.
ConfigDocument parse_config_text(const std::string& text);

struct MeshConfig {
    std::string body = "disk";  // disk | ellipse | sphere | ellipsoid | poly
    std::vector<double> semi_axes;
    std::string poly_file;
    std::string input_vtk;  // use an external mesh instead of generating one
    double R = 4.0;
    double h = 0.5;
    bool symmetric = true;
    int p_v = 2;
    std::string element = "auto";  // auto | scott_vogelius | taylor_hood
    int refinements = 0;
    int dim = 2;  // derived from the body
};

struct SweepConfig {
    std::vector<double> lambdas{0.0};
    double newton_tol = 1e-10;
    int max_iter = 30;
    int max_bisections = 4;
    bool write_fields = true;
};

struct ThresholdConfig {
    std::string source = "branch";  // branch | zero
    std::string branch;
    std::string method = "auto";
    int dense_limit = 2000;
    double tol = 1e-10;
    double state_tol = 1e-8;
    bool lambda_tilde = false;
    double tilde_tol = 1e-4;
};

struct ModesConfig {
    int N = 20;
    std::string method = "auto";
    double gram_tol = 1e-10;
    double coupling_tol = 1e-6;
    bool write_fields = true;
};

struct TransientConfig {
    std::string integrator = "monolithic";  // monolithic | galerkin
    int N = 40;
    double t_end = 50.0;
    double dt = 0.05;
    std::optional<double> epsilon;  // data size; derived from the Gronwall bound when absent
    double a_sup = 1.0;
    double b_sup = 1.0;
    double alpha = 3.0;
    std::vector<double> center{1.5, 0.5};
    std::vector<double> chi1{0.3, 0.5};
    std::vector<double> chi0{0.2, -0.1};
    int snapshot_every = 0;
    double decay_factor = 1e-3;
};

struct BifurcationConfig {
    std::string base_flow = "branch";  // branch | frozen_steady | strain
    std::string branch;
    double kappa = 20.0;
    double base_lambda = 0.0;  // frozen_steady: Reynolds number of the frozen state
    double lambda_min = 0.5;
    double lambda_max = 2.0;
    int samples = 8;
    int nev = 6;
    double sigma = 1.0;
    std::string method = "auto";
    int dense_limit = 1500;
    double tol = 1e-11;
    double delta = 1e-3;
    double crossing_tol = 1e-6;
    double range_threshold = 1e-3;
    double cluster_tol = 1e-6;
};

struct RunConfig {
    MeshConfig mesh;
    NondimParams params;
    std::optional<PhysicalParams> physical;
    SweepConfig sweep;
    ThresholdConfig thresholds;
    ModesConfig modes;
    TransientConfig transient;
    BifurcationConfig bifurcation;
    std::string out_dir = "out";
    unsigned seed = 12345;
    int jobs = 1;
    bool plots = true;
    bool export_operators = false;
    std::string text;  // source text, hashed into the manifest
};

/// Relative paths in the config resolve against the working directory.
/// Builds a validated RunConfig. Unknown sections or keys, wrong types and non-positive
/// tolerances raise ConfigError naming the offending field.
RunConfig build_run_config(const ConfigDocument& doc);
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

}  // namespace fsilab
