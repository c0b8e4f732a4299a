// SPDX-License-Identifier: Apache-2.0
#include "fsilab/fe.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "fsilab/errors.hpp"

namespace fsilab {

void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
}

QuadRule simplex_rule(int dim, int degree) {
    if (dim != 2 && dim != 3) throw QuadratureFailure("dimension must be 2 or 3");
    // the collapsed map raises the degree in the collapsed directions by the Jacobian factor
    const int n = (degree + dim + 1) / 2;
    std::vector<double> x, w;
    gauss_legendre01(n, x, w);
    QuadRule r;
    r.dim = dim;
    double total = 0.0;
    if (dim == 2) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double xi = x[i], eta = x[j];
                double px = xi * (1.0 - eta), py = eta;
                double wt = w[i] * w[j] * (1.0 - eta) * 2.0;
                r.bary.push_back({1.0 - px - py, px, py, 0.0});
                r.weights.push_back(wt);
                total += wt;
            }
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double xi = x[i], eta = x[j], zeta = x[k];
                    double px = xi * (1.0 - eta) * (1.0 - zeta), py = eta * (1.0 - zeta), pz = zeta;
                    double wt = w[i] * w[j] * w[k] * (1.0 - eta) * (1.0 - zeta) * (1.0 - zeta) * 6.0;
                    r.bary.push_back({1.0 - px - py - pz, px, py, pz});
                    r.weights.push_back(wt);
                    total += wt;
                }
    }
    if (std::abs(total - 1.0) > 1e-13) throw QuadratureFailure("rule weights do not sum to one");
    return r;
}

const std::vector<std::array<int, 2>>& p2_edges(int dim) {
    static const std::vector<std::array<int, 2>> e2 = {{0, 1}, {1, 2}, {0, 2}};
    static const std::vector<std::array<int, 2>> e3 = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    return dim == 2 ? e2 : e3;
}

void p2_values(int dim, const double* L, double* phi) {
    for (int i = 0; i <= dim; ++i) phi[i] = L[i] * (2.0 * L[i] - 1.0);
    const auto& e = p2_edges(dim);
    for (size_t k = 0; k < e.size(); ++k) phi[dim + 1 + k] = 4.0 * L[e[k][0]] * L[e[k][1]];
}

void p2_gradients(int dim, const double* L, const Eigen::MatrixXd& gradL, Eigen::MatrixXd& grad) {
    grad.resize(p2_count(dim), dim);
    for (int i = 0; i <= dim; ++i) grad.row(i) = (4.0 * L[i] - 1.0) * gradL.row(i);
    const auto& e = p2_edges(dim);
    for (size_t k = 0; k < e.size(); ++k) {
        int a = e[k][0], b = e[k][1];
        grad.row(dim + 1 + k) = 4.0 * (L[b] * gradL.row(a) + L[a] * gradL.row(b));
    }
}

SimplexGeometry simplex_geometry(int dim, const std::array<Eigen::Vector3d, 4>& x) {
    Eigen::MatrixXd J(dim, dim);
    for (int k = 0; k < dim; ++k) J.col(k) = (x[k + 1] - x[0]).head(dim);
    double det = J.determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw QuadratureFailure("degenerate cell");
    SimplexGeometry g;
    g.volume = std::abs(det) / (dim == 2 ? 2.0 : 6.0);
    Eigen::MatrixXd Jinv = J.inverse();
    g.gradL.resize(dim + 1, dim);
    g.gradL.bottomRows(dim) = Jinv;
    g.gradL.row(0) = -Jinv.colwise().sum();
    return g;
}

}  // namespace fsilab
