// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "fsilab/geometry.hpp"

namespace fsilab {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vec = Eigen::VectorXd;

struct NondimParams {
    double lambda = 0.0;
    double omega_n2 = 1.0;
    double varpi = 1.0;
    void validate() const;
};

struct PhysicalParams {
    double V = 1.0, L = 1.0, nu = 1.0, rho = 1.0, M = 1.0, ell = 1.0;
    void validate() const;
};

NondimParams nondimensionalize(const PhysicalParams& phys);

enum class ElementFamily {
    Auto,           // Scott-Vogelius in 2D, Taylor-Hood in 3D
    ScottVogelius,  // P2 / discontinuous P1 on a barycentric refinement (2D only)
    TaylorHood      // P2 / continuous P1
};

enum class NodeKind : int { Interior = 0, Body = 1, Outer = 2 };

/// Mixed velocity/pressure space on the annulus plus the rigid translation.
///
/// Velocity unknowns come in two layouts. The full layout holds every P2 node
/// (node * dim + component). The reduced layout holds the free interior
/// components followed, when the rigid part is free, by the `dim` rigid
/// components. `P` maps reduced to full (body nodes copy the rigid part), and
/// `Pc` maps reduced to the field that equals the rigid part at every node.
struct FsiSpace {
    Mesh mesh;  // input mesh
    Mesh comp;  // mesh the elements live on (barycentric split for Scott-Vogelius)
    ElementFamily family = ElementFamily::TaylorHood;
    int dim = 2;
    int p_v = 2;
    int p_p = 1;
    bool pinned = false;

    std::vector<Vec3> nodes;
    std::vector<NodeKind> node_kind;
    std::vector<std::array<int, 10>> cell_nodes;
    std::vector<int> free_index;  // per node, -1 when constrained
    int n_free_nodes = 0;
    int n_red = 0;
    int rigid_offset = -1;

    int n_p = 0;
    bool p_discontinuous = false;
    std::vector<std::array<int, 4>> cell_pdofs;

    SpMat P;
    SpMat Pc;
    SpMat Ebody;  // full x dim, unit vectors on body nodes

    int n_nodes() const { return static_cast<int>(nodes.size()); }
    int n_full() const { return n_nodes() * dim; }
    int n_cells() const { return static_cast<int>(comp.cells.size()); }
    bool has_rigid() const { return rigid_offset >= 0; }

    /// Full vector with the given Dirichlet values on body and outer nodes, zero inside.
    Vec dirichlet_lift(const std::function<Vec3(const Vec3&)>& body_value,
                       const std::function<Vec3(const Vec3&)>& outer_value) const;
    /// Full vector equal to `value` on the body nodes.
    Vec body_lift(const Vec3& value) const;
    /// Rigid part of a reduced vector (zero vector for a pinned space).
    Vec rigid_part(const Vec& x) const;
    /// Full nodal field from a reduced vector plus an optional lift.
    Vec expand(const Vec& x) const { return P * x; }
};

FsiSpace build_fsi_space(const Mesh& mesh, int p_v, bool pin_rigid,
                         ElementFamily family = ElementFamily::Auto);

}  // namespace fsilab
