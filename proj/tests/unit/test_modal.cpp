// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fsilab/modal.hpp"
#include "helpers.hpp"

using namespace fsilab;
using fsilab::testing::SmallProblem;

namespace {

const SmallProblem& problem() {
    static SmallProblem p(3.0, 0.5, [] {
        NondimParams q;
        q.omega_n2 = 4.0;
        q.varpi = 0.8;
        return q;
    }());
    return p;
}

const ModalBasis& basis() {
    static ModalBasis b = stokes_fsi_modes(problem().unpinned, problem().ops_u, 10, EigMethod::Iterative);
    return b;
}

}  // namespace

TEST(Modes, OrthonormalSortedPositive) {
    const ModalBasis& b = basis();
    ASSERT_EQ(b.N, 10);
    EXPECT_LT(b.gram_residual, 1e-10);
    for (int i = 0; i < b.N; ++i) EXPECT_GT(b.mu[i], 0.0);
    for (int i = 1; i < b.N; ++i) EXPECT_LE(b.mu[i - 1], b.mu[i]);
    const Mat gram = b.modes.transpose() * (problem().ops_u.M_w * b.modes);
    EXPECT_LT((gram - Mat::Identity(b.N, b.N)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Modes, StiffnessIsDiagonal) {
    const ModalBasis& b = basis();
    const Mat K = b.modes.transpose() * (problem().ops_u.A_visc * b.modes);
    const Mat ref = b.mu.asDiagonal();
    EXPECT_LT((K - ref).cwiseAbs().maxCoeff(), 1e-8 * b.mu.maxCoeff());
}

TEST(Modes, SmallestEigenvalueMatchesDenseOracle) {
    ModalBasis d = stokes_fsi_modes(problem().unpinned, problem().ops_u, 3, EigMethod::Dense);
    EXPECT_NEAR(basis().mu[0], d.mu[0], 1e-8 * d.mu[0]);
    EXPECT_NEAR(basis().mu[2], d.mu[2], 1e-8 * d.mu[2]);
}

TEST(Modes, RigidCouplingResidualSmall) {
    const ModalBasis& b = basis();
    ASSERT_EQ(b.coupling_residual.size(), 10u);
    for (double r : b.coupling_residual) EXPECT_LT(r, 1e-6);
    // the rigid parts are the rigid components of the reduced vectors
    for (int i = 0; i < b.N; ++i)
        EXPECT_LT((b.rigid.col(i) - problem().unpinned.rigid_part(b.modes.col(i))).norm(), 1e-14);
}

TEST(VerifyModes, FreshBasisPasses) {
    ModeReport r = verify_modes(basis(), problem().ops_u);
    EXPECT_TRUE(r.pass) << r.message;
    EXPECT_TRUE(r.sorted);
    EXPECT_TRUE(r.positive);
}

TEST(VerifyModes, ScaledModeGivesGramDefectThree) {
    ModalBasis b = basis();
    b.modes.col(3) *= 2.0;
    ModeReport r = verify_modes(b, problem().ops_u);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.gram_residual, 3.0, 1e-8);
}

TEST(VerifyModes, SwappedModesFlagged) {
    ModalBasis b = basis();
    std::swap(b.mu[1], b.mu[4]);
    b.modes.col(1).swap(b.modes.col(4));
    b.pressures.col(1).swap(b.pressures.col(4));
    b.rigid.col(1).swap(b.rigid.col(4));
    ModeReport r = verify_modes(b, problem().ops_u);
    EXPECT_FALSE(r.sorted);
    EXPECT_FALSE(r.pass);
}

TEST(Modes, PinnedSpaceBasisHasNoRigidPart) {
    ModalBasis b = stokes_fsi_modes(problem().pinned, problem().ops_p, 4, EigMethod::Dense);
    EXPECT_LT(b.gram_residual, 1e-10);
    EXPECT_EQ(b.rigid.cwiseAbs().maxCoeff(), 0.0);
}
