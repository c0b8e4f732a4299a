// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

namespace fsilab {

/// Quadrature on the reference simplex in barycentric coordinates.
/// Weights sum to one, so integrals are weight * cell volume.
struct QuadRule {
    int dim = 2;
    std::vector<std::array<double, 4>> bary;
    std::vector<double> weights;
};

/// Collapsed (Duffy) Gauss-Legendre rule exact for polynomials of total degree `degree`.
QuadRule simplex_rule(int dim, int degree);

/// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w);

/// Local edge table of the P2 element: edge e joins vertices kEdges[d][e].
const std::vector<std::array<int, 2>>& p2_edges(int dim);
inline int p2_count(int dim) { return dim == 2 ? 6 : 10; }

/// P2 shape functions at barycentric point `L`.
void p2_values(int dim, const double* L, double* phi);
/// P2 gradients; `gradL` holds the constant gradients of the barycentric coordinates (rows).
void p2_gradients(int dim, const double* L, const Eigen::MatrixXd& gradL, Eigen::MatrixXd& grad);

/// Geometry of one straight simplex: barycentric gradients (rows) and volume.
struct SimplexGeometry {
    Eigen::MatrixXd gradL;  // (dim+1) x dim
    double volume = 0.0;
};
SimplexGeometry simplex_geometry(int dim, const std::array<Eigen::Vector3d, 4>& x);

}  // namespace fsilab
