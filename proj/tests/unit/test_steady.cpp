// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fsilab/errors.hpp"
#include "fsilab/steady.hpp"
#include "helpers.hpp"

using namespace fsilab;
using fsilab::testing::SmallProblem;

namespace {
const SmallProblem& problem() {
    static SmallProblem p;
    return p;
}
}  // namespace

TEST(SolveSteady, StokesConvergesInOneNewtonStep) {
    const auto& p = problem();
    SteadyState st = solve_steady(p.pinned, p.ops_p, p.params);
    EXPECT_EQ(st.iterations, 1);
    EXPECT_LT(st.residual, 1e-10);
    EXPECT_GT(std::abs(st.drag()), 0.0);
    // body velocity equals e1
    for (int n = 0; n < p.pinned.n_nodes(); ++n)
        if (p.pinned.node_kind[n] == NodeKind::Body) {
            ASSERT_DOUBLE_EQ(st.u_full[2 * n], 1.0);
            ASSERT_DOUBLE_EQ(st.u_full[2 * n + 1], 0.0);
        }
}

TEST(SolveSteady, RequiresPinnedSpace) {
    const auto& p = problem();
    EXPECT_THROW(solve_steady(p.unpinned, p.ops_u, p.params), PreconditionViolation);
}

TEST(SolveSteady, NonlinearResidualAndSpringBalance) {
    const auto& p = problem();
    NondimParams q = p.params;
    q.lambda = 2.0;
    q.omega_n2 = 3.0;
    q.varpi = 0.7;
    SteadyState st = solve_steady(p.pinned, p.ops_p, q);
    EXPECT_LT(st.residual, 1e-10);
    Vec r = steady_momentum_residual(p.pinned, p.ops_p, q.lambda, st.u_full, st.p, Vec());
    EXPECT_LT((SpMat(p.pinned.P.transpose()) * r).norm(), 1e-9);
    Vec balance = q.omega_n2 * st.chi + q.varpi * st.traction;
    EXPECT_LT(balance.norm(), 1e-12 * st.traction.norm());
}

TEST(SpringElongation, TransverseComponentVanishesOnSymmetricMesh) {
    const auto& p = problem();
    NondimParams q = p.params;
    q.lambda = 1.0;
    SteadyState st = solve_steady(p.pinned, p.ops_p, q);
    EXPECT_LT(std::abs(st.chi[1]), 1e-8 * st.chi.norm());
}

TEST(SpringElongation, ScalesWithStiffnessAndMassRatio) {
    const auto& p = problem();
    SteadyState st = solve_steady(p.pinned, p.ops_p, p.params);
    NondimParams a;
    a.omega_n2 = 2.0;
    a.varpi = 1.5;
    NondimParams b = a;
    b.omega_n2 = 4.0;
    NondimParams c = a;
    c.varpi = 3.0;
    Vec xa = spring_elongation(st, a);
    EXPECT_NEAR((spring_elongation(st, b) - 0.5 * xa).norm(), 0.0, 1e-14 * xa.norm());
    EXPECT_NEAR((spring_elongation(st, c) - 2.0 * xa).norm(), 0.0, 1e-14 * xa.norm());
}

TEST(Continuation, SweepConvergesWithWarmStarts) {
    const auto& p = problem();
    Branch br = continuation_sweep(p.pinned, p.ops_p, p.params, {0.0, 0.5, 1.0});
    ASSERT_EQ(br.states.size(), 3u);
    for (const auto& s : br.states) EXPECT_LT(s.residual, 1e-10);
    NondimParams q = p.params;
    q.lambda = 1.0;
    SteadyState cold = solve_steady(p.pinned, p.ops_p, q);
    EXPECT_LE(br.iterations[2], cold.iterations);
    EXPECT_LT((br.states[2].u - cold.u).norm(), 1e-8 * cold.u.norm());
}

TEST(Continuation, SinglePointMatchesDirectSolve) {
    const auto& p = problem();
    Branch br = continuation_sweep(p.pinned, p.ops_p, p.params, {0.0});
    ASSERT_EQ(br.states.size(), 1u);
    SteadyState st = solve_steady(p.pinned, p.ops_p, p.params);
    EXPECT_LT((br.states[0].u - st.u).norm(), 1e-12 * st.u.norm());
}

TEST(Continuation, HugeJumpStalls) {
    const auto& p = problem();
    ContinuationOptions opt;
    opt.max_bisections = 2;
    opt.newton.max_iter = 3;
    try {
        continuation_sweep(p.pinned, p.ops_p, p.params, {0.0, 5000.0}, opt);
        FAIL() << "expected ContinuationStalled";
    } catch (const ContinuationStalled& e) {
        EXPECT_EQ(e.last_good_lambda, 0.0);
        EXPECT_FALSE(e.bisection_trace.empty());
    }
}

TEST(Extrapolation, ExactInverseLaw) {
    std::vector<double> R = {4, 8, 16}, d;
    for (double r : R) d.push_back(3.0 + 2.5 / r);
    Extrapolation e = extrapolate_in_radius(R, d, 1.0);
    EXPECT_NEAR(e.value, 3.0, 1e-10);
    Extrapolation f = extrapolate_in_radius(R, d);
    EXPECT_NEAR(f.value, 3.0, 1e-10);
    EXPECT_NEAR(f.q, 1.0, 1e-8);
}

TEST(Extrapolation, FitsInverseSquareExponent) {
    std::vector<double> R = {4, 8, 16}, d;
    for (double r : R) d.push_back(-1.0 + 7.0 / (r * r));
    Extrapolation e = extrapolate_in_radius(R, d);
    EXPECT_GE(e.q, 1.9);
    EXPECT_LE(e.q, 2.1);
    EXPECT_NEAR(e.value, -1.0, 1e-8);
}

TEST(Extrapolation, IdenticalStatesAreIllConditioned) {
    const auto& p = problem();
    SteadyState st = solve_steady(p.pinned, p.ops_p, p.params);
    EXPECT_THROW(extrapolate_in_radius(std::vector<SteadyState>{st, st}, 1.0), IllConditionedFit);
    EXPECT_THROW(extrapolate_in_radius(std::vector<double>{4, 4, 4}, {1, 1, 1}), IllConditionedFit);
}

TEST(Branch, SaveLoadRoundTrip) {
    const auto& p = problem();
    Branch br = continuation_sweep(p.pinned, p.ops_p, p.params, {0.0, 0.5});
    const auto dir = std::filesystem::temp_directory_path() / "fsilab_branch_test";
    std::filesystem::remove_all(dir);
    save_branch(br, dir.string(), p.params);
    Branch back = load_branch(dir.string());
    std::filesystem::remove_all(dir);
    ASSERT_EQ(back.states.size(), 2u);
    for (size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.states[i].lambda, br.states[i].lambda);
        EXPECT_EQ((back.states[i].u - br.states[i].u).norm(), 0.0);
        EXPECT_EQ((back.states[i].u_full - br.states[i].u_full).norm(), 0.0);
        EXPECT_EQ((back.states[i].chi - br.states[i].chi).norm(), 0.0);
    }
}

TEST(Branch, MissingDirectoryThrows) {
    EXPECT_THROW(load_branch("/nonexistent/fsilab/branch"), Error);
}

TEST(Branch, TamperedStateFileIsRejected) {
    const auto& p = problem();
    Branch br = continuation_sweep(p.pinned, p.ops_p, p.params, {0.0});
    const auto dir = std::filesystem::temp_directory_path() / "fsilab_branch_tamper";
    std::filesystem::remove_all(dir);
    save_branch(br, dir.string(), p.params);
    {
        std::fstream f((dir / "state_0000.bin").string(), std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(20);
        f.put('\x7f');
    }
    EXPECT_THROW(load_branch(dir.string()), PreconditionViolation);
    std::filesystem::remove_all(dir);
}
