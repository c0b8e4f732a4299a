// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "fsilab/errors.hpp"
#include "fsilab/linalg.hpp"
#include "fsilab/operators.hpp"
#include "helpers.hpp"

using namespace fsilab;
using fsilab::testing::SmallProblem;
using fsilab::testing::max_abs;
using fsilab::testing::random_vec;

namespace {
const SmallProblem& problem() {
    static SmallProblem p;
    return p;
}
}  // namespace

TEST(Nondimensionalize, UnitInputs) {
    NondimParams p = nondimensionalize(PhysicalParams{});
    EXPECT_DOUBLE_EQ(p.lambda, 1.0);
    EXPECT_DOUBLE_EQ(p.omega_n2, 1.0);
    EXPECT_DOUBLE_EQ(p.varpi, 1.0);
}

TEST(Nondimensionalize, MatchesDirectEvaluation) {
    PhysicalParams ph;
    ph.V = 2;
    ph.L = 1;
    ph.nu = 0.5;
    ph.rho = 1;
    ph.M = 2;
    ph.ell = 8;
    NondimParams p = nondimensionalize(ph);
    EXPECT_NEAR(p.lambda, 4.0, 1e-14);
    EXPECT_NEAR(p.omega_n2, 16.0, 1e-14);
    EXPECT_NEAR(p.varpi, 0.5, 1e-14);
}

TEST(Nondimensionalize, ZeroViscosityRejected) {
    PhysicalParams ph;
    ph.nu = 0.0;
    EXPECT_THROW(nondimensionalize(ph), PreconditionViolation);
}

TEST(Space, PinnedHasDimFewerUnknowns) {
    const auto& p = problem();
    EXPECT_EQ(p.unpinned.n_red, p.pinned.n_red + 2);
    EXPECT_TRUE(p.unpinned.has_rigid());
    EXPECT_FALSE(p.pinned.has_rigid());
    EXPECT_EQ(p.pinned.n_p, p.unpinned.n_p);
}

TEST(Space, RigidTranslationIsDivergenceFree) {
    const auto& p = problem();
    Vec x = Vec::Zero(p.unpinned.n_red);
    x[p.unpinned.rigid_offset] = 1.0;
    Vec u = p.unpinned.Pc * x;
    EXPECT_LT((p.ops_u.Bf * u).cwiseAbs().maxCoeff(), 1e-13);
    // every body node carries the rigid value
    Vec full = p.unpinned.P * x;
    for (int n = 0; n < p.unpinned.n_nodes(); ++n)
        if (p.unpinned.node_kind[n] == NodeKind::Body) ASSERT_DOUBLE_EQ(full[2 * n], 1.0);
}

TEST(Space, DofCountGrowsUnderRefinement) {
    const auto& p = problem();
    FsiSpace fine = build_fsi_space(refine(p.mesh), 2, true);
    const double ratio = double(fine.n_red) / p.pinned.n_red;
    EXPECT_GT(ratio, 3.5);
    EXPECT_LT(ratio, 4.5);
}

TEST(Space, UnsupportedDegree) {
    EXPECT_THROW(build_fsi_space(problem().mesh, 3, true), UnsupportedDegree);
}

TEST(Assemble, MassAndViscousFormsAreSymmetric) {
    const auto& p = problem();
    EXPECT_EQ(max_abs(p.ops_u.M_w - SpMat(p.ops_u.M_w.transpose())), 0.0);
    EXPECT_EQ(max_abs(p.ops_u.A_visc - SpMat(p.ops_u.A_visc.transpose())), 0.0);
    Vec x = random_vec(p.unpinned.n_red, 3);
    EXPECT_GT(x.dot(p.ops_u.M_w * x), 0.0);
}

TEST(Assemble, WeightedMassAddsRigidBlock) {
    const auto& p = problem();
    Vec x = Vec::Zero(p.unpinned.n_red);
    x[p.unpinned.rigid_offset + 1] = 1.0;
    // |x|_w^2 = fluid part + |rigid part|^2 / varpi
    const double fluid = x.dot(p.ops_u.M_fluid * x);
    EXPECT_NEAR(x.dot(p.ops_u.M_w * x) - fluid, 1.0 / p.params.varpi, 1e-14);
}

TEST(Assemble, SkewAdvectionVanishesOnDiagonal) {
    const auto& p = problem();
    for (unsigned seed = 1; seed <= 3; ++seed) {
        Vec a = p.unpinned.P * random_vec(p.unpinned.n_red, seed);
        Vec u = p.unpinned.P * random_vec(p.unpinned.n_red, seed + 10);
        const double c = advection_form(p.unpinned, a, u, u);
        EXPECT_LT(std::abs(c), 1e-13 * a.norm() * u.squaredNorm());
    }
}

TEST(Assemble, AdvectionMatrixAgreesWithForm) {
    const auto& p = problem();
    Vec a = p.unpinned.P * random_vec(p.unpinned.n_red, 5);
    Vec u = p.unpinned.P * random_vec(p.unpinned.n_red, 6);
    Vec v = p.unpinned.P * random_vec(p.unpinned.n_red, 7);
    const double ref = advection_form(p.unpinned, a, u, v);
    EXPECT_NEAR(v.dot(advection_matrix(p.unpinned, a) * u), ref, 1e-11 * std::abs(ref));
    EXPECT_NEAR(v.dot(transport_matrix(p.unpinned, u) * a), ref, 1e-11 * std::abs(ref));
    EXPECT_NEAR(v.dot(advection_apply(p.unpinned, a, u)), ref, 1e-11 * std::abs(ref));
}

TEST(Assemble, GradientIdentityOnSolenoidalFields) {
    const auto& p = problem();
    Vec x = project_solenoidal(p.pinned, p.ops_p, random_vec(p.pinned.n_red, 11));
    ASSERT_LT((p.ops_p.B * x).norm(), 1e-10 * x.norm());
    const double grad2 = x.dot(p.ops_p.G * x);
    const double sym2 = 0.5 * x.dot(p.ops_p.A_visc * x);  // = ||D u||^2
    EXPECT_NEAR(grad2 / (2.0 * sym2), 1.0, 10.0 * p.mesh.h * p.mesh.h);
}

TEST(Projection, IdempotentAndKillsGradients) {
    const auto& p = problem();
    Vec f = random_vec(p.unpinned.n_red, 21);
    Vec Pf = project_solenoidal(p.unpinned, p.ops_u, f);
    Vec PPf = project_solenoidal(p.unpinned, p.ops_u, Pf);
    EXPECT_LT((PPf - Pf).norm(), 1e-12 * Pf.norm());
    // discrete gradient: M_w g = B^T q
    SparseLU lu(p.ops_u.M_w);
    Vec q = random_vec(p.unpinned.n_p, 22);
    Vec g = lu.solve(SpMat(p.ops_u.B.transpose()) * q);
    EXPECT_LT(project_solenoidal(p.unpinned, p.ops_u, g).norm(), 1e-10 * g.norm());
}

TEST(SanityConstants, PinnedAndUnpinned) {
    const auto& p = problem();
    SanityConstants cp = sanity_constants(p.pinned, p.ops_p, 4);
    SanityConstants cu = sanity_constants(p.unpinned, p.ops_u, 4);
    EXPECT_EQ(cp.kappa1, 0.0);
    EXPECT_GT(cu.kappa1, 0.0);
    EXPECT_GT(cu.kappa0, 0.0);
    EXPECT_EQ(cu.kappa0_exponent, 4.0);
}

TEST(SanityConstants, Kappa1StableUnderRefinement) {
    const auto& p = problem();
    Mesh m1 = refine(p.mesh);
    Mesh m2 = refine(m1);
    FsiSpace s1 = build_fsi_space(m1, 2, false), s2 = build_fsi_space(m2, 2, false);
    OperatorSet o1 = assemble(s1, p.params), o2 = assemble(s2, p.params);
    const double coarse = sanity_constants(p.unpinned, p.ops_u, 0).kappa1;
    const double k1 = sanity_constants(s1, o1, 0).kappa1;
    const double k2 = sanity_constants(s2, o2, 0).kappa1;
    // a sup over (nearly) nested spaces grows with refinement and levels off
    EXPECT_GE(k1, coarse * (1.0 - 1e-8));
    EXPECT_GE(k2, k1 * (1.0 - 1e-8));
    EXPECT_LT(k2 / k1 - 1.0, 0.05);
}

TEST(Fields, L2ErrorOfInterpolatedQuadratic) {
    const auto& p = problem();
    // a quadratic field is reproduced exactly by the P2 interpolant
    auto field = [](const Vec3& x) { return Vec3(x[0] * x[1], x[0] * x[0] - 2 * x[1], 0); };
    Vec u(p.pinned.n_full());
    for (int n = 0; n < p.pinned.n_nodes(); ++n) {
        Vec3 v = field(p.pinned.nodes[n]);
        u[2 * n] = v[0];
        u[2 * n + 1] = v[1];
    }
    EXPECT_LT(l2_error(p.pinned, u, field), 1e-12);
}
