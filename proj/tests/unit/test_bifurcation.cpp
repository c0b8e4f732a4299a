// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "fsilab/bifurcation.hpp"
#include "fsilab/errors.hpp"
#include "fsilab/steady.hpp"
#include "helpers.hpp"

using namespace fsilab;
using fsilab::testing::SmallProblem;

namespace {

const SmallProblem& problem() {
    static SmallProblem p(3.0, 0.5);
    return p;
}

const Vec& strain() {
    static Vec u = strain_base_flow(problem().pinned, 20.0);
    return u;
}

PencilOptions with(EigMethod m) {
    PencilOptions o;
    o.method = m;
    return o;
}

Mat diag5(double a, double b, double c, double d, double e) {
    Vec v(5);
    v << a, b, c, d, e;
    return v.asDiagonal();
}

}  // namespace

TEST(Pencil, ZeroReynoldsHasNoCandidate) {
    const auto& p = problem();
    PencilSample s = pencil_sample(p.pinned, p.ops_p, strain(), 0.0, p.params);
    EXPECT_TRUE(s.no_candidate);
}

TEST(Pencil, RequiresPinnedSpace) {
    const auto& p = problem();
    EXPECT_THROW(pencil_sample(p.unpinned, p.ops_u, strain_base_flow(p.unpinned, 20.0), 1.0, p.params),
                 PreconditionViolation);
}

TEST(Pencil, FrozenFlowEigenvalueIsLinearInLambda) {
    const auto& p = problem();
    std::vector<double> lambdas = {0.8, 1.0, 1.2, 1.4, 1.6};
    EigenPath path = frozen_eigenpath(p.pinned, p.ops_p, strain(), p.params, lambdas, with(EigMethod::Dense));
    ASSERT_EQ(path.samples.size(), 5u);
    const double theta = path.samples[0].mu.real() / lambdas[0];
    for (size_t i = 0; i < lambdas.size(); ++i) {
        const auto& s = path.samples[i];
        ASSERT_FALSE(s.complex_pair);
        EXPECT_NEAR(s.mu.real(), lambdas[i] * theta, 1e-8 * std::abs(s.mu.real()));
        if (i > 0) EXPECT_GT(s.overlap, 0.5);
    }
}

TEST(Pencil, IterativeMatchesDenseOracle) {
    const auto& p = problem();
    PencilSample it = pencil_sample(p.pinned, p.ops_p, strain(), 1.3, p.params, with(EigMethod::Iterative));
    PencilSample de = pencil_sample(p.pinned, p.ops_p, strain(), 1.3, p.params, with(EigMethod::Dense));
    EXPECT_TRUE(de.dense);
    EXPECT_FALSE(it.dense);
    EXPECT_LT(std::abs(it.mu - de.mu), 1e-8 * std::abs(de.mu));
    EXPECT_NEAR(std::abs(it.w.dot(p.ops_p.M_w * de.w)), 1.0, 1e-6);
}

TEST(Pencil, IterativeHandlesSpectrumFarFromSigma) {
    // a weak steady flow puts every eigenvalue near zero, far from the shift
    const auto& p = problem();
    NondimParams q = p.params;
    q.lambda = 0.05;
    SteadyState st = solve_steady(p.pinned, p.ops_p, q);
    PencilOptions dom = with(EigMethod::Iterative);
    dom.dominant = true;
    PencilSample it = pencil_sample(p.pinned, p.ops_p, st.u_full, 0.05, q, dom);
    PencilSample si = pencil_sample(p.pinned, p.ops_p, st.u_full, 0.05, q, with(EigMethod::Iterative));
    EXPECT_LT(std::abs(si.mu), 1.0);
    PencilOptions all = with(EigMethod::Dense);
    all.nev = p.pinned.n_red;
    PencilSample de = pencil_sample(p.pinned, p.ops_p, st.u_full, 0.05, q, all);
    EXPECT_LT(std::abs(it.mu), 1.0);
    EXPECT_LT(it.residual, 1e-8);
    double nearest = 1e300;
    for (int i = 0; i < de.cluster.size(); ++i) nearest = std::min(nearest, std::abs(de.cluster[i] - it.mu));
    EXPECT_LT(nearest, 1e-8 * std::max(std::abs(it.mu), 1e-6));
}

TEST(Pencil, AdjointPairingIsNormalized) {
    const auto& p = problem();
    PencilSample s = pencil_sample(p.pinned, p.ops_p, strain(), 1.3, p.params);
    ASSERT_FALSE(s.complex_pair);
    EXPECT_NEAR(s.pairing, 1.0, 1e-8);
    EXPECT_LT(s.adjoint_consistency, 1e-6);
    EXPECT_NEAR(s.w.dot(p.ops_p.M_w * s.w), 1.0, 1e-12);
    EXPECT_EQ(s.chi.size(), 2);
}

TEST(Crossing, FrozenFlowCrossesAtInverseTheta) {
    const auto& p = problem();
    PencilOptions po;
    const double theta = pencil_sample(p.pinned, p.ops_p, strain(), 1.0, p.params, po).mu.real();
    ASSERT_GT(theta, 0.0);
    const double target = 1.0 / theta;
    std::vector<double> lambdas = {0.7 * target, 0.9 * target, 1.15 * target, 1.3 * target};
    EigenPath path = frozen_eigenpath(p.pinned, p.ops_p, strain(), p.params, lambdas, po);
    MuEvaluator eval = [&](double l) { return pencil_sample(p.pinned, p.ops_p, strain(), l, p.params, po).mu.real(); };
    std::vector<double> cr = detect_crossing(path, eval, 1e-10);
    ASSERT_EQ(cr.size(), 1u);
    EXPECT_NEAR(cr[0], target, 1e-6 * target);

    Transversality t = transversality(cr[0], eval);
    EXPECT_NEAR(t.mu_prime, -1.0 / cr[0], 1e-4 / cr[0]);
    EXPECT_TRUE(t.nonzero);

    PencilSample at = pencil_sample(p.pinned, p.ops_p, strain(), cr[0], p.params, po);
    SimplicityResult simp = simplicity_check(at, p.pinned, p.ops_p, strain());
    EXPECT_EQ(simp.kernel_dim, 1);
    EXPECT_TRUE(simp.simple);
    BifurcationReport r = report(cr[0], at.mu.real(), simp, t);
    EXPECT_EQ(r.verdict, "bifurcation point certified (numerically)");
}

TEST(Crossing, SyntheticLinearPath) {
    MuEvaluator half = [](double l) { return 0.5 * l; };
    std::vector<double> ls = {1.0, 1.5, 2.5, 3.0}, mu;
    for (double l : ls) mu.push_back(half(l));
    std::vector<double> cr = detect_crossing(ls, mu, half, 1e-10);
    ASSERT_EQ(cr.size(), 1u);
    EXPECT_NEAR(cr[0], 2.0, 1e-6);
}

TEST(Crossing, PathBelowOneHasNoCandidate) {
    MuEvaluator low = [](double l) { return 0.1 * l; };
    std::vector<double> ls = {1.0, 2.0, 3.0}, mu = {0.1, 0.2, 0.3};
    EXPECT_TRUE(detect_crossing(ls, mu, low).empty());
    BifurcationReport r = report(std::nullopt, 0.0, {}, std::nullopt);
    EXPECT_EQ(r.verdict, "no candidate");
    EXPECT_FALSE(r.candidate);
}

TEST(Transversality, SyntheticLinearPathSlope) {
    Transversality t = transversality(2.0, [](double l) { return 0.5 * l; });
    EXPECT_NEAR(t.slope, 0.5, 1e-8);
    EXPECT_NEAR(t.mu_prime, -0.5, 1e-8);
    EXPECT_TRUE(t.nonzero);
}

TEST(Transversality, FlatPathIsNotNonzero) {
    Transversality t = transversality(2.0, [](double) { return 1.0; });
    EXPECT_FALSE(t.nonzero);
    SimplicityResult simp;
    simp.kernel_dim = 1;
    simp.range_residual = 1.0;
    EXPECT_EQ(report(2.0, 1.0, simp, t).verdict, "candidate, transversality unresolved");
}

TEST(Transversality, InconsistentStencilsRaise) {
    // a kink at the crossing makes the two central differences disagree
    MuEvaluator kink = [](double l) { return l < 2.0 ? 1.0 : 1.0 + 1e6 * (l - 2.0) * (l - 2.0) * (l - 2.0); };
    EXPECT_THROW(transversality(2.0, kink, 1e-3), FDInconclusive);
}

TEST(Simplicity, SimpleCrossing5x5) {
    const Mat K = diag5(1.0, 0.5, 0.3, -0.2, 0.1);
    const Mat A = Mat::Identity(5, 5);
    Vec w1 = Vec::Unit(5, 0);
    SimplicityResult r = simplicity_check_dense(K, A, w1);
    EXPECT_EQ(r.kernel_dim, 1);
    EXPECT_NEAR(r.range_residual, 1.0, 1e-12);
    EXPECT_TRUE(r.simple);
}

TEST(Simplicity, NonSymmetricSimpleCrossing5x5) {
    // similarity transform of the simple pencil; the left null vector is not w1
    Mat S(5, 5);
    S << 1, 0.3, 0, 0, 0.1, 0, 1, 0.2, 0, 0, 0, 0, 1, 0.4, 0, 0.2, 0, 0, 1, 0, 0, 0, 0.3, 0, 1;
    const Mat K = S * diag5(1.0, 0.5, 0.3, -0.2, 0.1) * S.inverse();
    const Mat A = Mat::Identity(5, 5);
    Vec w1 = S.col(0);
    SimplicityResult r = simplicity_check_dense(K, A, w1);
    EXPECT_EQ(r.kernel_dim, 1);
    EXPECT_GT(r.range_residual, 1e-3);
    EXPECT_TRUE(r.simple);
}

TEST(Simplicity, DoubleEigenvalue5x5) {
    const Mat K = diag5(1.0, 1.0, 0.3, -0.2, 0.1);
    SimplicityResult r = simplicity_check_dense(K, Mat::Identity(5, 5), Vec::Unit(5, 0));
    EXPECT_EQ(r.kernel_dim, 2);
    EXPECT_FALSE(r.simple);
    SimplicityResult simp = r;
    Transversality t;
    t.nonzero = true;
    EXPECT_EQ(report(1.0, 1.0, simp, t).verdict, "multiple eigenvalue, outside the simple-crossing theory");
}

TEST(Simplicity, JordanBlockFailsRangeCondition5x5) {
    Mat K = diag5(1.0, 1.0, 0.3, -0.2, 0.1);
    K(0, 1) = 1.0;  // Jordan block at mu = 1: A - K = [[0, -1], [0, 0]]
    SimplicityResult r = simplicity_check_dense(K, Mat::Identity(5, 5), Vec::Unit(5, 0));
    EXPECT_LT(r.range_residual, 1e-10);
    EXPECT_FALSE(r.simple);
    SimplicityResult one = r;
    one.kernel_dim = 1;
    Transversality t;
    t.nonzero = true;
    EXPECT_EQ(report(1.0, 1.0, one, t).verdict, "candidate, range condition fails");
}

TEST(Simplicity, ZeroEigenvectorRejected) {
    EXPECT_THROW(simplicity_check_dense(Mat::Identity(5, 5), Mat::Identity(5, 5), Vec::Zero(5)),
                 InvalidEigenvector);
    PencilSample empty;
    const auto& p = problem();
    empty.w = Vec::Zero(p.pinned.n_red);
    EXPECT_THROW(simplicity_check(empty, p.pinned, p.ops_p, strain()), InvalidEigenvector);
}

TEST(Report, CrossingResidualTooLarge) {
    SimplicityResult simp;
    simp.kernel_dim = 1;
    simp.range_residual = 1.0;
    Transversality t;
    t.nonzero = true;
    EXPECT_EQ(report(2.0, 1.0 + 1e-3, simp, t).verdict, "no candidate");
    EXPECT_EQ(report(2.0, 1.0 + 1e-9, simp, t).verdict, "bifurcation point certified (numerically)");
}
