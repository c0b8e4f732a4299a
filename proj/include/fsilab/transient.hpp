// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsilab/modal.hpp"
#include "fsilab/steady.hpp"
#include "fsilab/thresholds.hpp"

namespace fsilab {

/// Coefficients of the perturbation in the modal basis plus the spring state.
struct GalerkinState {
    Vec c;
    Vec chi;
    Vec sigma;  // sum_k c_k psi_hat_k
    double t = 0.0;
};

/// Reduced dynamics  dc/dt = L c - lambda Q(c, c) - (omega_n^2 / varpi) Psi_hat^T chi,  dchi/dt = Psi_hat c.
struct OdeSystem {
    int N = 0;
    int dim = 2;
    Mat L;                  // includes -diag(mu)
    std::vector<double> Q;  // Q[(i * N + k) * N + m] = c(psi_hat_k - psi_k; psi_m, psi_i)
    Mat Psi_hat;            // dim x N
    Vec mu;
    Mat grad_gram;          // (grad psi_i, grad psi_j)
    double lambda = 0.0;
    double omega_n2 = 1.0;
    double varpi = 1.0;

    double q(int i, int k, int m) const { return Q[(static_cast<size_t>(i) * N + k) * N + m]; }
    /// (Q(c, c))_i = sum_{k,m} Q_ikm c_k c_m.
    Vec quadratic(const Vec& c) const;
    /// Right-hand side of the coefficient equation.
    Vec rhs(const Vec& c, const Vec& chi) const;
};

struct StepRecord {
    double t = 0.0;
    double dt = 0.0;
    double energy = 0.0;   // |x|_w^2 + (omega_n^2/varpi)|chi|^2
    double u_norm2 = 0.0;  // fluid L2 norm squared
    double grad2 = 0.0;    // ||grad u||^2
    double sigma = 0.0;    // |sigma|
    double chi = 0.0;      // |chi|
    int newton_iters = 0;
};

struct Trajectory {
    std::vector<StepRecord> steps;  // steps[0] is the initial state
    Vec final_x;                    // reduced field (monolithic) or coefficients (Galerkin)
    Vec final_chi;
    int dt_halvings = 0;
    double initial_decay_metric() const;  // ||grad u|| + |chi| + |sigma| at t = 0
    double final_decay_metric() const;
};

/// c_i = <x0, psi_i>_w with x0 in the reduced unpinned layout (its rigid part is chi1).
GalerkinState project_initial_data(const Vec& x0, const Vec& chi0, const ModalBasis& basis, const OperatorSet& ops);

/// Solenoidal initial field: nodal interpolant of `field` in the fluid, rigid value chi1, then
/// weighted projection onto the discretely divergence-free space.
Vec initial_perturbation(const FsiSpace& unpinned, const OperatorSet& ops, const VectorField& field,
                         const Vec3& chi1);

/// ||x||_{1,2} + |chi0| + |chi1| used to normalise initial data.
double data_norm(const OperatorSet& ops, const FsiSpace& unpinned, const Vec& x0, const Vec& chi0);

OdeSystem assemble_ode_tensors(const FsiSpace& unpinned, const ModalBasis& basis, const SteadyState& state,
                               const NondimParams& params);

struct IntegratorOptions {
    int max_halvings = 6;
    int max_newton = 40;
    double newton_rtol = 1e-13;
    /// Monolithic only: time-dependent load on the reduced layout, used for manufactured solutions.
    std::function<Vec(double)> forcing;
    /// Monolithic only: called after each accepted step with (t, x, chi).
    std::function<void(double, const Vec&, const Vec&)> observer;
};

Trajectory integrate_galerkin(const OdeSystem& sys, const GalerkinState& init, double t_end, double dt,
                              const IntegratorOptions& opt = {});

Trajectory integrate_monolithic(const FsiSpace& unpinned, const OperatorSet& ops, const SteadyState& state,
                                const NondimParams& params, const Vec& x0, const Vec& chi0, double t_end, double dt,
                                const IntegratorOptions& opt = {});

struct EnergyReport {
    double gamma = 0.0;
    bool applicable = false;    // lambda < lambda2 and lambda2 finite or infinite (gamma > 0)
    int violations = 0;         // steps with 1/2 dE/dt + max(gamma, 0) |grad u|^2 > eps_tol
    double max_excess = 0.0;    // largest left-hand side minus eps_tol (negative when all pass)
    double eps_tol = 0.0;
    int growth_steps = 0;       // steps where E increased beyond 1e-10 E(0)
    double dissipation = 0.0;   // integral of ||grad u||^2 dt
    double initial_metric = 0.0;
    double final_metric = 0.0;
    bool tail_oscillation = false;
    bool pass = false;
};

/// Per-step discrete energy inequality with tolerance 1e-10 E(0)/dt, decay metrics and the tail test.
EnergyReport energy_monitor(const Trajectory& traj, const ThresholdResult& lambda2, const NondimParams& params,
                            double decay_factor = 1e-3);

/// True if, on the second half of the run, E has a local minimum followed by a value above 1.01 times it.
bool tail_oscillates(const Trajectory& traj);

struct GronwallBound {
    double M = 0.0;
    double delta_max = 0.0;
};
GronwallBound gronwall_bound(double a_sup, double b_sup, double alpha);

/// Largest eps with eps^2 <= min{delta, gamma delta^2 min{1, varpi / (1 + omega_n^2)}}.
double smallness_epsilon(double delta, double gamma, const NondimParams& params);

}  // namespace fsilab
