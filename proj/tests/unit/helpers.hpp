// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "fsilab/geometry.hpp"
#include "fsilab/operators.hpp"
#include "fsilab/space.hpp"

namespace fsilab::testing {

/// Small 2D disk problem shared by the unit tests (a few hundred unknowns).
struct SmallProblem {
    Mesh mesh;
    FsiSpace pinned, unpinned;
    OperatorSet ops_p, ops_u;
    NondimParams params;
    explicit SmallProblem(double R = 3.0, double h = 0.5, NondimParams p = {})
        : mesh(build_annulus_mesh(BodyShape::disk(), R, h, true)),
          pinned(build_fsi_space(mesh, 2, true)),
          unpinned(build_fsi_space(mesh, 2, false)),
          ops_p(assemble(pinned, p)),
          ops_u(assemble(unpinned, p)),
          params(p) {}
};

inline Vec random_vec(int n, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = dist(gen);
    return v;
}

inline double max_abs(const SpMat& m) {
    double r = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) r = std::max(r, std::abs(it.value()));
    return r;
}

}  // namespace fsilab::testing
