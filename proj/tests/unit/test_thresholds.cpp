// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "fsilab/errors.hpp"
#include "fsilab/thresholds.hpp"
#include "helpers.hpp"

using namespace fsilab;
using fsilab::testing::SmallProblem;

namespace {

const SmallProblem& problem() {
    static SmallProblem p;
    return p;
}

const SteadyState& state() {
    static SteadyState st = [] {
        NondimParams q = problem().params;
        q.lambda = 0.5;
        return solve_steady(problem().pinned, problem().ops_p, q);
    }();
    return st;
}

ThresholdOptions with(EigMethod m) {
    ThresholdOptions o;
    o.method = m;
    return o;
}

}  // namespace

TEST(Thresholds, ZeroBaseFlowGivesInfinity) {
    const auto& p = problem();
    SteadyState zero;
    zero.u_full = Vec::Zero(p.pinned.n_full());
    ThresholdResult l1 = lambda1(zero, p.pinned, p.ops_p);
    ThresholdResult l2 = lambda2(zero, p.unpinned, p.ops_u);
    EXPECT_TRUE(l1.infinite);
    EXPECT_TRUE(l2.infinite);
    EXPECT_TRUE(std::isinf(l1.value()));
    EXPECT_TRUE(std::isinf(l2.value()));
}

TEST(Thresholds, DoublingBaseFlowHalvesLambda1) {
    const auto& p = problem();
    SteadyState twice = state();
    twice.u_full *= 2.0;
    const double a = lambda1(state(), p.pinned, p.ops_p).value();
    const double b = lambda1(twice, p.pinned, p.ops_p).value();
    EXPECT_NEAR(b, 0.5 * a, 1e-10 * a);
}

TEST(Thresholds, IterativeMatchesDenseOracle) {
    const auto& p = problem();
    for (auto kind : {ThresholdKind::Lambda1, ThresholdKind::Lambda2}) {
        auto run = [&](EigMethod m) {
            return kind == ThresholdKind::Lambda1 ? lambda1(state(), p.pinned, p.ops_p, with(m))
                                                  : lambda2(state(), p.unpinned, p.ops_u, with(m));
        };
        ThresholdResult it = run(EigMethod::Iterative), de = run(EigMethod::Dense);
        EXPECT_TRUE(de.dense);
        EXPECT_FALSE(it.dense);
        EXPECT_NEAR(it.theta, de.theta, 1e-8 * de.theta);
    }
}

TEST(Thresholds, StabilityThresholdBelowUniqueness) {
    const auto& p = problem();
    ThresholdResult l1 = lambda1(state(), p.pinned, p.ops_p);
    ThresholdResult l2 = lambda2(state(), p.unpinned, p.ops_u);
    EXPECT_GE(l2.theta, l1.theta - 1e-10);
    EXPECT_LE(l2.value(), l1.value());
}

TEST(Thresholds, RawQuotientReproducesEigenvalue) {
    const auto& p = problem();
    for (EigMethod m : {EigMethod::Dense, EigMethod::Iterative}) {
        ThresholdResult l1 = lambda1(state(), p.pinned, p.ops_p, with(m));
        ThresholdResult l2 = lambda2(state(), p.unpinned, p.ops_u, with(m));
        EXPECT_LT(l1.raw_mismatch(), 1e-8);
        EXPECT_LT(l2.raw_mismatch(), 1e-8);
        EXPECT_NEAR(l1.maximizer.dot(p.ops_p.G * l1.maximizer), 1.0, 1e-12);
    }
}

TEST(Thresholds, MaximizerIsDivergenceFree) {
    const auto& p = problem();
    ThresholdResult l2 = lambda2(state(), p.unpinned, p.ops_u, with(EigMethod::Iterative));
    EXPECT_LT((p.ops_u.B * l2.maximizer).norm(), 1e-9);
}

TEST(Thresholds, WrongSpaceOrBadStateRejected) {
    const auto& p = problem();
    EXPECT_THROW(lambda1(state(), p.unpinned, p.ops_u), PreconditionViolation);
    EXPECT_THROW(lambda2(state(), p.pinned, p.ops_p), PreconditionViolation);
    SteadyState bad = state();
    bad.residual = 1.0;
    EXPECT_THROW(lambda1(bad, p.pinned, p.ops_p), NonConvergedState);
}

TEST(LambdaTilde, SyntheticCrossingAtTwo) {
    auto l1 = [](double l) { return 4.0 - l; };
    auto r = find_lambda_tilde(l1, {0.5, 1.0, 1.5, 2.5, 3.0}, 1e-4);
    ASSERT_TRUE(r.has_value());
    EXPECT_NEAR(r->lambda, 2.0, 1e-4);
    EXPECT_LE(r->lo, 2.0);
    EXPECT_GE(r->hi, 2.0);
}

TEST(LambdaTilde, NoCrossingGivesNone) {
    auto l1 = [](double) { return 100.0; };
    EXPECT_FALSE(find_lambda_tilde(l1, {0.5, 1.0, 2.0}).has_value());
    auto inf = [](double) { return std::numeric_limits<double>::infinity(); };
    EXPECT_FALSE(find_lambda_tilde(inf, {0.5, 1.0}).has_value());
}

TEST(LambdaTilde, BranchCrossingHasKernelCandidate) {
    const auto& p = problem();
    const double l1_low = lambda1(state(), p.pinned, p.ops_p).value();
    // bracket the fixed point lambda = lambda1(lambda) with a short branch
    Branch br = continuation_sweep(p.pinned, p.ops_p, p.params, {0.5, 0.5 * l1_low, 1.5 * l1_low});
    auto r = find_lambda_tilde(br, p.pinned, p.ops_p, p.params, {}, 1e-4);
    ASSERT_TRUE(r.has_value());
    NondimParams q = p.params;
    q.lambda = r->lambda;
    SteadyState st = solve_steady(p.pinned, p.ops_p, q);
    ThresholdResult l1 = lambda1(st, p.pinned, p.ops_p);
    EXPECT_NEAR(l1.theta, 1.0 / r->lambda, 1e-4);
}
