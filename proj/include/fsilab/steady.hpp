// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include <optional>
#include <string>
#include <vector>

#include "fsilab/operators.hpp"

namespace fsilab {

/// Steady equilibrium (u0, p0, chi0) at one Reynolds number.
/// `u` is the reduced vector of the pinned space; `u_full` adds the body lift.
struct SteadyState {
    double lambda = 0.0;
    Vec u;
    Vec u_full;
    Vec p;
    Vec chi;
    Vec traction;  // integral of T(u0,p0) n over the body, n pointing into the body
    double residual = 0.0;
    int iterations = 0;
    double R = 0.0;
    double h = 0.0;
    double drag() const { return traction.size() > 0 ? traction[0] : 0.0; }
    double lift() const { return traction.size() > 1 ? traction[1] : 0.0; }
};

struct SteadyOptions {
    double tol = 1e-10;
    int max_iter = 30;
    int max_halvings = 8;
    /// Verification hooks; by default u = e1 on the body and 0 on the outer sphere, no forcing.
    VectorField forcing;
    VectorField body_value;
    VectorField outer_value;
};

/// Newton solve on a pinned space; `ops` must come from the same space.
SteadyState solve_steady(const FsiSpace& pinned, const OperatorSet& ops, const NondimParams& params,
                         const SteadyState* init = nullptr, const SteadyOptions& opt = {});

/// Convenience overload that assembles the operators.
SteadyState solve_steady(const FsiSpace& pinned, const NondimParams& params, const SteadyState* init = nullptr,
                         const SteadyOptions& opt = {});

/// chi0 = -(varpi / omega_n^2) * traction.
Vec spring_elongation(const SteadyState& state, const NondimParams& params);

/// Full nonlinear residual of the momentum equation on the nodal layout.
Vec steady_momentum_residual(const FsiSpace& pinned, const OperatorSet& ops, double lambda, const Vec& u_full,
                             const Vec& p, const Vec& forcing_load);

struct Branch {
    std::vector<SteadyState> states;
    std::vector<int> iterations;
    std::vector<bool> bisected;
};

struct ContinuationOptions {
    int max_bisections = 4;
    SteadyOptions newton;
    /// Called after every converged grid point (lambda, state, bisected); lets callers keep partial branches.
    std::function<void(const SteadyState&, bool)> on_state;
};

Branch continuation_sweep(const FsiSpace& pinned, const OperatorSet& ops, const NondimParams& params,
                          const std::vector<double>& lambda_grid, const ContinuationOptions& opt = {});

struct Extrapolation {
    double value = 0.0;
    double q = 0.0;
    double coefficient = 0.0;
};

/// Fit d(R) = d_inf + c R^-q. With two radii q must be supplied.
Extrapolation extrapolate_in_radius(const std::vector<double>& R, const std::vector<double>& d,
                                    std::optional<double> fixed_q = std::nullopt);

struct RadiusExtrapolation {
    Extrapolation drag;
    Extrapolation chi_norm;
};
RadiusExtrapolation extrapolate_in_radius(const std::vector<SteadyState>& states,
                                          std::optional<double> fixed_q = std::nullopt);

/// Branch directory: one coefficient file per state plus manifest.json.
void save_branch(const Branch& branch, const std::string& dir, const NondimParams& params);
Branch load_branch(const std::string& dir);

}  // namespace fsilab
