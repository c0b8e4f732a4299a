// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "fsilab/space.hpp"

namespace fsilab {

/// Assembled forms. Full matrices act on the nodal layout, the others on the
/// reduced layout of the space they were built from.
struct OperatorSet {
    NondimParams params;
    SpMat Mf, Af, Gf, D1f;  // full velocity layout
    SpMat Bf;               // pressure x full velocity, B = -(q, div u)
    SpMat M_fluid, M_w, A_visc, G, D1;
    SpMat B;
    Vec pmass;  // integral of each pressure basis function
};

OperatorSet assemble(const FsiSpace& space, const NondimParams& params);

/// P^T F P.
SpMat reduce(const FsiSpace& space, const SpMat& full);
/// Weighted mass matrix on the reduced layout for a given mass ratio.
SpMat weighted_mass(const FsiSpace& space, const SpMat& M_fluid, double varpi);

/// Matrix of (u, v) -> c(a; u, v) with c(a;u,v) = 1/2[(a.grad u, v) - (a.grad v, u)].
SpMat advection_matrix(const FsiSpace& space, const Vec& a);
/// Matrix of (w, v) -> c(w; u, v) for fixed u.
SpMat transport_matrix(const FsiSpace& space, const Vec& u);
/// Matrix of (u, v) -> (u.grad w, v) for fixed w.
SpMat reaction_matrix(const FsiSpace& space, const Vec& w);
/// v -> c(a; u, v) as a full-layout vector.
Vec advection_apply(const FsiSpace& space, const Vec& a, const Vec& u);
/// (a.grad u, v) without skew-symmetrization.
double trilinear_raw(const FsiSpace& space, const Vec& a, const Vec& u, const Vec& v);
/// c(a; u, v).
double advection_form(const FsiSpace& space, const Vec& a, const Vec& u, const Vec& v);

using VectorField = std::function<Vec3(const Vec3&)>;

/// Load vector (f, v) on the full layout.
Vec load_vector(const FsiSpace& space, const VectorField& f);
/// L2 norm of (u_h - u) for a full-layout u_h, using a high-order rule.
double l2_error(const FsiSpace& space, const Vec& u_full, const VectorField& exact);
/// Lp norm of a full-layout field.
double lp_norm(const FsiSpace& space, const Vec& u_full, double p);
/// Integral of the body-facet traction functional: Ebody^T r for a full residual r.
Vec body_functional(const FsiSpace& space, const Vec& r_full);

/// Discrete Helmholtz projection in the weighted inner product (reduced layout).
Vec project_solenoidal(const FsiSpace& space, const OperatorSet& ops, const Vec& f);

struct SanityConstants {
    double kappa0 = 0.0;
    double kappa1 = 0.0;
    double kappa0_exponent = 6.0;  // Lebesgue exponent used for kappa0 (4 in 2D)
    int samples = 0;
};

/// kappa1 from the rigid-part pencil, kappa0 sampled over the lowest `n_samples` modes.
SanityConstants sanity_constants(const FsiSpace& space, const OperatorSet& ops, int n_samples = 20);

/// Write a sparse matrix as "row col value" lines.
void write_coo(const SpMat& m, const std::string& path);

}  // namespace fsilab
