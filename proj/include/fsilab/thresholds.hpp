// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "fsilab/linalg.hpp"
#include "fsilab/steady.hpp"

namespace fsilab {

enum class ThresholdKind { Lambda1, Lambda2 };

/// lambda = 1/theta_max when theta_max > 0, otherwise the +inf sentinel.
struct ThresholdResult {
    ThresholdKind kind = ThresholdKind::Lambda1;
    double theta = 0.0;
    bool infinite = true;
    Vec maximizer;              // reduced layout of the space used, G-normalized
    double eig_residual = 0.0;  // relative Ritz residual
    double raw_quotient = 0.0;  // unsymmetrized quotient evaluated at the maximizer
    int dofs = 0;               // constrained dimension, if known (dense path), else reduced size
    bool dense = false;

    double value() const { return infinite ? std::numeric_limits<double>::infinity() : 1.0 / theta; }
    /// |raw quotient - theta| relative to |theta| (absolute if theta == 0).
    double raw_mismatch() const;
};

struct ThresholdOptions {
    EigMethod method = EigMethod::Auto;
    int dense_limit = 2000;  // Auto switches to the dense path below this reduced size
    double tol = 1e-10;
    double state_tol = 1e-8;  // states with a larger residual are rejected
    unsigned seed = 12345;
};

/// Uniqueness threshold on the pinned space.
ThresholdResult lambda1(const SteadyState& state, const FsiSpace& pinned, const OperatorSet& ops_pinned,
                        const ThresholdOptions& opt = {});

/// Stability threshold on the unpinned space (rigid part free).
ThresholdResult lambda2(const SteadyState& state, const FsiSpace& unpinned, const OperatorSet& ops_unpinned,
                        const ThresholdOptions& opt = {});

/// Symmetric pencil (S, G) whose top eigenvalue is 1/lambda_i; exposed for oracles.
struct ThresholdPencil {
    SpMat S;
    SpMat G;
};
ThresholdPencil threshold_pencil(const SteadyState& state, const FsiSpace& space, const OperatorSet& ops);

struct LambdaTilde {
    double lambda = 0.0;
    double f = 0.0;  // lambda - lambda1(lambda) at the returned point
    double lo = 0.0, hi = 0.0;
    std::vector<std::pair<double, double>> evaluations;  // (lambda, lambda1)
};

/// First sign change of f(l) = l - lambda1(l) over the samples, refined by bisection to |f| < ftol.
std::optional<LambdaTilde> find_lambda_tilde(const std::function<double(double)>& lambda1_of,
                                             const std::vector<double>& samples, double ftol = 1e-4,
                                             int max_iter = 200);

/// Branch version: samples are the branch states; refinement re-solves the steady problem.
std::optional<LambdaTilde> find_lambda_tilde(const Branch& branch, const FsiSpace& pinned,
                                             const OperatorSet& ops_pinned, const NondimParams& params,
                                             const ThresholdOptions& opt = {}, double ftol = 1e-4);

}  // namespace fsilab
