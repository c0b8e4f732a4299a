// SPDX-License-Identifier: Apache-2.0
#include "fsilab/modal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "fsilab/errors.hpp"

namespace fsilab {

namespace {

// Least-squares pressure for a velocity residual f: minimizes ||f - B^T phi||.
Vec recover_pressure(const SaddleSolver& ls, const Vec& f, Vec* remainder = nullptr) {
    Vec y, phi;
    ls.solve(f, Vec(), y, &phi);
    if (remainder) *remainder = y;
    return phi;
}

SpMat identity(int n) {
    SpMat I(n, n);
    I.setIdentity();
    return I;
}

}  // namespace

Vec mode_traction(const FsiSpace& space, const OperatorSet& ops, const Vec& psi, const Vec& phi, double mu) {
    Vec pf = space.P * psi;
    Vec r = ops.Af * pf + SpMat(ops.Bf.transpose()) * phi - mu * (ops.Mf * pf);
    return body_functional(space, r);
}

ModalBasis stokes_fsi_modes(const FsiSpace& space, const OperatorSet& ops, int N, EigMethod method) {
    const int n = space.n_red;
    if (N < 1) throw PreconditionViolation("need at least one mode");
    if (N >= n - ops.B.rows() + 1) throw PreconditionViolation("N exceeds the constrained space dimension");
    ModalBasis basis;
    basis.N = N;
    basis.varpi = ops.params.varpi;
    if (method == EigMethod::Auto) method = n <= 1500 ? EigMethod::Dense : EigMethod::Iterative;

    if (method == EigMethod::Dense) {
        Mat Z = null_space_basis(Mat(ops.B));
        Mat Ad = Z.transpose() * (ops.A_visc * Z);
        Mat Md = Z.transpose() * (ops.M_w * Z);
        Ad = 0.5 * (Ad + Ad.transpose()).eval();
        Md = 0.5 * (Md + Md.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Ad, Md);
        if (es.info() != Eigen::Success) throw EigSolveFailure("dense generalized eigensolve failed");
        basis.mu = es.eigenvalues().head(N);
        basis.modes = Z * es.eigenvectors().leftCols(N);
    } else {
        SaddleSolver solver(ops.A_visc, ops.B, ops.pmass);
        BlockOp T = [&](const Mat& X) { return solver.solve_block(ops.M_w * X); };
        BlockOp W = [&](const Mat& X) { return Mat(ops.M_w * X); };
        KrylovOptions opt;
        opt.nev = N;
        opt.block = 4;
        opt.max_basis = std::max(3 * N, N + 40);
        opt.tol = 1e-11;
        auto r = block_krylov_symmetric(n, T, W, opt);
        basis.mu = r.values.cwiseInverse();
        basis.modes = r.vectors;
        // ascending mu already since nu was descending
    }
    // re-orthonormalize in the weighted product, in index order
    for (int i = 0; i < N; ++i) {
        Vec v = basis.modes.col(i);
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < i; ++j) v -= basis.modes.col(j) * basis.modes.col(j).dot(ops.M_w * v);
        v /= std::sqrt(v.dot(ops.M_w * v));
        // deterministic sign: largest-magnitude entry positive
        Eigen::Index imax;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0) v = -v;
        basis.modes.col(i) = v;
    }
    Mat G = basis.modes.transpose() * (ops.M_w * basis.modes);
    basis.gram_residual = (G - Mat::Identity(N, N)).cwiseAbs().maxCoeff();
    for (int i = 0; i + 1 < N; ++i)
        if (std::abs(basis.mu[i + 1] - basis.mu[i]) < 1e-8 * basis.mu[i]) basis.cluster_warning = true;

    SaddleSolver ls(identity(n), ops.B, ops.pmass);
    basis.pressures.resize(space.n_p, N);
    basis.rigid = Mat::Zero(space.dim, N);
    basis.coupling_residual.resize(N);
    for (int i = 0; i < N; ++i) {
        const Vec psi = basis.modes.col(i);
        Vec f = basis.mu[i] * (ops.M_w * psi) - ops.A_visc * psi;
        basis.pressures.col(i) = recover_pressure(ls, f);
        Vec hat = space.rigid_part(psi);
        basis.rigid.col(i) = hat;
        Vec tr = mode_traction(space, ops, psi, basis.pressures.col(i), basis.mu[i]);
        basis.coupling_residual[i] =
            (basis.mu[i] * hat - ops.params.varpi * tr).norm() / (basis.mu[i] * hat.norm() + 1.0);
    }
    return basis;
}

ModeReport verify_modes(const ModalBasis& basis, const OperatorSet& ops, double gram_tol, double stiffness_tol,
                        double pde_tol) {
    ModeReport r;
    const int N = basis.N;
    Mat G = basis.modes.transpose() * (ops.M_w * basis.modes);
    r.gram_residual = (G - Mat::Identity(N, N)).cwiseAbs().maxCoeff();
    Mat K = basis.modes.transpose() * (ops.A_visc * basis.modes);
    double mumax = basis.mu.cwiseAbs().maxCoeff();
    r.stiffness_residual = (K - Mat(basis.mu.asDiagonal())).cwiseAbs().maxCoeff() / mumax;
    for (int i = 0; i < N; ++i) {
        if (!(basis.mu[i] > 0.0)) r.positive = false;
        if (i + 1 < N && basis.mu[i + 1] < basis.mu[i]) r.sorted = false;
    }
    const int n = static_cast<int>(basis.modes.rows());
    SpMat I(n, n);
    I.setIdentity();
    SaddleSolver ls(I, ops.B, ops.pmass);
    for (int i = 0; i < N; ++i) {
        Vec psi = basis.modes.col(i);
        Vec Mpsi = ops.M_w * psi;
        Vec f = ops.A_visc * psi - basis.mu[i] * Mpsi;
        Vec rem;
        recover_pressure(ls, f, &rem);
        r.max_pde_residual = std::max(r.max_pde_residual, rem.norm() / (std::abs(basis.mu[i]) * Mpsi.norm()));
    }
    std::ostringstream ss;
    if (r.gram_residual > gram_tol) ss << "gram residual " << r.gram_residual << "; ";
    if (r.stiffness_residual > stiffness_tol) ss << "stiffness residual " << r.stiffness_residual << "; ";
    if (r.max_pde_residual > pde_tol) ss << "pde residual " << r.max_pde_residual << "; ";
    if (!r.sorted) ss << "eigenvalues not sorted; ";
    if (!r.positive) ss << "non-positive eigenvalue; ";
    r.message = ss.str();
    r.pass = r.message.empty();
    return r;
}

}  // namespace fsilab
