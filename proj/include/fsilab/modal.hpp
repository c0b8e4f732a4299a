// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fsilab/linalg.hpp"
#include "fsilab/operators.hpp"

namespace fsilab {

/// Eigenpairs of A_visc x = mu M_w x on the divergence-free unpinned space.
struct ModalBasis {
    int N = 0;
    Vec mu;          // ascending
    Mat modes;       // reduced layout, one column per mode
    Mat rigid;       // dim x N rigid parts
    Mat pressures;   // n_p x N
    double gram_residual = 0.0;
    bool cluster_warning = false;
    std::vector<double> coupling_residual;  // |mu psi_hat - varpi traction| / (mu |psi_hat| + 1)
    double varpi = 1.0;
};


ModalBasis stokes_fsi_modes(const FsiSpace& space, const OperatorSet& ops, int N,
                            EigMethod method = EigMethod::Auto);

struct ModeReport {
    double gram_residual = 0.0;
    double stiffness_residual = 0.0;  // max |psi_i^T A psi_j - mu_i delta_ij| / max mu
    double max_pde_residual = 0.0;    // max ||A psi - mu M psi - B^T phi|| / (mu ||M psi||)
    bool sorted = true;
    bool positive = true;
    bool pass = false;
    std::string message;
};

ModeReport verify_modes(const ModalBasis& basis, const OperatorSet& ops, double gram_tol = 1e-10,
                        double stiffness_tol = 1e-8, double pde_tol = 1e-6);

/// Body traction of (psi, phi) computed through the variational functional,
/// i.e. the integral of T(psi, phi) n over the body with n pointing into the body.
Vec mode_traction(const FsiSpace& space, const OperatorSet& ops, const Vec& psi, const Vec& phi, double mu);

}  // namespace fsilab
