// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fsilab/linalg.hpp"
#include "fsilab/steady.hpp"

namespace fsilab {

/// Linearized operator K(lambda) = lambda P^T [D1 - c(u0; ., .) - c(., u0, .)] P on the pinned space.
/// A_visc - K(lambda) is the steady Newton Jacobian at u0.
SpMat linearized_operator(const FsiSpace& pinned, const OperatorSet& ops, const Vec& u0_full, double lambda);

/// Divergence-free synthetic base flow with stream function kappa x y exp(-|x|^2 / 4).
Vec strain_base_flow(const FsiSpace& space, double kappa);

struct PencilOptions {
    int nev = 6;
    double sigma = 1.0;
    EigMethod method = EigMethod::Auto;
    int dense_limit = 1500;
    double tol = 1e-11;
    unsigned seed = 12345;
    double complex_tol = 1e-8;  // |Im mu| below complex_tol |mu| counts as real
    /// Iterative only: skip shift-invert and use the dominant eigenvalues of A^{-1} K directly.
    /// Shift-invert falls back to this on its own when it stalls.
    bool dominant = false;
};

/// Eigenvalues of K x = mu A_visc x nearest sigma, with right and left vectors of the nearest one.
struct PencilSample {
    double lambda = 0.0;
    std::complex<double> mu{0.0, 0.0};
    Eigen::VectorXcd cluster;  // nev eigenvalues ordered by distance to sigma
    Vec w;                     // real right eigenvector, w^T M w = 1
    Vec w_adj;                 // left eigenvector scaled so that w_adj^T A w = 1
    Vec chi;                   // spring elongation recovered from the eigenpair
    double pairing = 0.0;      // w_adj^T A w after scaling
    double adjoint_consistency = 0.0;  // |w_adj^T K w - mu w_adj^T A w| / |mu|
    double residual = 0.0;
    double overlap = 1.0;      // with the previous sample
    bool no_candidate = false;
    bool complex_pair = false;
    bool path_jump = false;
    bool dense = false;
};

PencilSample pencil_sample(const FsiSpace& pinned, const OperatorSet& ops, const Vec& u0_full, double lambda,
                           const NondimParams& params, const PencilOptions& opt = {}, const Vec* previous = nullptr);

struct EigenPath {
    std::vector<PencilSample> samples;
};

/// One sample per branch state with lambda in [lambda_min, lambda_max].
EigenPath linearized_eigenpath(const Branch& branch, const FsiSpace& pinned, const OperatorSet& ops,
                               const NondimParams& params, double lambda_min, double lambda_max,
                               const PencilOptions& opt = {});

/// Same with a lambda-independent base flow.
EigenPath frozen_eigenpath(const FsiSpace& pinned, const OperatorSet& ops, const Vec& u0_full,
                           const NondimParams& params, const std::vector<double>& lambdas,
                           const PencilOptions& opt = {});

/// Real mu(lambda) nearest 1; used for refinement and finite differences.
using MuEvaluator = std::function<double(double)>;

/// Sign changes of mu - 1 between real samples, refined by secant steps to |mu - 1| < tol.
std::vector<double> detect_crossing(const EigenPath& path, const MuEvaluator& evaluate, double tol = 1e-6);
std::vector<double> detect_crossing(const std::vector<double>& lambdas, const std::vector<double>& mu,
                                    const MuEvaluator& evaluate, double tol = 1e-6);

struct SimplicityResult {
    int kernel_dim = 0;
    double range_residual = 0.0;  // relative least-squares residual of L W = A W1
    double range_threshold = 1e-3;
    double cluster_tol = 1e-6;
    bool simple = false;
};

/// Dense version on an unconstrained pencil (K, A): kernel dimension of A - K near mu = 1 and the
/// range condition for L = A - K.
SimplicityResult simplicity_check_dense(const Mat& K, const Mat& A, const Vec& w1, double range_threshold = 1e-3,
                                        double cluster_tol = 1e-6);

/// Sparse version using the cluster and left eigenvector of a pencil sample at the crossing.
SimplicityResult simplicity_check(const PencilSample& at_crossing, const FsiSpace& pinned, const OperatorSet& ops,
                                  const Vec& u0_full, double range_threshold = 1e-3, double cluster_tol = 1e-6);

struct Transversality {
    double slope = 0.0;         // d mu / d lambda of the pencil eigenvalue (Richardson value)
    double mu_prime = 0.0;      // derivative of the critical eigenvalue of I - lambda M, equals -slope
    double slope_coarse = 0.0;  // central difference with step delta
    double slope_fine = 0.0;    // central difference with step delta / 2
    double delta = 0.0;
    double noise = 0.0;
    bool nonzero = false;
};

/// Central differences at delta and delta/2; throws FDInconclusive when they differ by more than 50%.
Transversality transversality(double lambda_s, const MuEvaluator& evaluate, double delta = 1e-3,
                              double eig_noise = 1e-10);

struct BifurcationReport {
    bool candidate = false;
    double lambda_s = 0.0;
    double mu_residual = 0.0;
    SimplicityResult simplicity;
    std::optional<Transversality> trans;
    std::string trans_error;
    std::string verdict;
};

BifurcationReport report(std::optional<double> lambda_s, double mu_at_crossing, const SimplicityResult& simp,
                         const std::optional<Transversality>& trans, const std::string& trans_error = {},
                         double tol_cross = 1e-6);

}  // namespace fsilab
