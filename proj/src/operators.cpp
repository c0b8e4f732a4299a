// SPDX-License-Identifier: Apache-2.0
#include "fsilab/operators.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "fsilab/errors.hpp"
#include "fsilab/fe.hpp"
#include "fsilab/linalg.hpp"
#include "fsilab/modal.hpp"

namespace fsilab {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Shape data of one cell at every quadrature point.
struct CellEval {
    int nb = 0, nq = 0, d = 2;
    std::vector<double> w;             // weight * volume
    Mat phi;                           // nq x nb
    std::vector<Mat> grad;             // nq entries of nb x d
    std::vector<Vec3> x;               // physical points
    Mat psi;                           // nq x (d+1) pressure basis (barycentric)
};

const QuadRule& rule(int dim, int degree) {
    static const QuadRule r2_5 = simplex_rule(2, 5), r3_5 = simplex_rule(3, 5);
    static const QuadRule r2_10 = simplex_rule(2, 10), r3_8 = simplex_rule(3, 8);
    if (degree <= 5) return dim == 2 ? r2_5 : r3_5;
    return dim == 2 ? r2_10 : r3_8;
}

void eval_cell(const FsiSpace& s, int c, const QuadRule& q, CellEval& ce) {
    const int d = s.dim;
    std::array<Vec3, 4> xv{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    for (int i = 0; i <= d; ++i) xv[i] = s.comp.vertices[s.comp.cells[c][i]];
    SimplexGeometry g = simplex_geometry(d, xv);
    ce.d = d;
    ce.nb = p2_count(d);
    ce.nq = static_cast<int>(q.weights.size());
    ce.w.resize(ce.nq);
    ce.phi.resize(ce.nq, ce.nb);
    ce.grad.resize(ce.nq);
    ce.x.resize(ce.nq);
    ce.psi.resize(ce.nq, d + 1);
    std::vector<double> phi(ce.nb);
    for (int k = 0; k < ce.nq; ++k) {
        const double* L = q.bary[k].data();
        ce.w[k] = q.weights[k] * g.volume;
        p2_values(d, L, phi.data());
        for (int b = 0; b < ce.nb; ++b) ce.phi(k, b) = phi[b];
        p2_gradients(d, L, g.gradL, ce.grad[k]);
        Vec3 x = Vec3::Zero();
        for (int i = 0; i <= d; ++i) {
            x += L[i] * xv[i];
            ce.psi(k, i) = L[i];
        }
        ce.x[k] = x;
    }
}

// Value and gradient (row i = component, col j = derivative) of a full field at point k.
void field_at(const FsiSpace& s, const CellEval& ce, int c, int k, const Vec& u, Eigen::Vector3d& val,
              Eigen::Matrix3d& grad) {
    const int d = s.dim;
    val.setZero();
    grad.setZero();
    const auto& cn = s.cell_nodes[c];
    for (int b = 0; b < ce.nb; ++b) {
        const int base = cn[b] * d;
        for (int i = 0; i < d; ++i) {
            double ub = u[base + i];
            val[i] += ce.phi(k, b) * ub;
            for (int j = 0; j < d; ++j) grad(i, j) += ce.grad[k](b, j) * ub;
        }
    }
}

void scatter(const FsiSpace& s, int c, const Mat& local, Triplets& t) {
    const int d = s.dim, nb = p2_count(d);
    const auto& cn = s.cell_nodes[c];
    for (int a = 0; a < nb; ++a)
        for (int i = 0; i < d; ++i)
            for (int b = 0; b < nb; ++b)
                for (int j = 0; j < d; ++j) {
                    double v = local(a * d + i, b * d + j);
                    if (v != 0.0) t.emplace_back(cn[a] * d + i, cn[b] * d + j, v);
                }
}

SpMat symmetrized(const SpMat& m) {
    SpMat s = 0.5 * (m + SpMat(m.transpose()));
    s.makeCompressed();
    return s;
}

SpMat from_triplets(int rows, int cols, const Triplets& t) {
    SpMat m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

template <class LocalFn>
SpMat assemble_velocity_matrix(const FsiSpace& s, LocalFn fn) {
    const QuadRule& q = rule(s.dim, 5);
    const int nb = p2_count(s.dim), d = s.dim;
    Triplets t;
    t.reserve(static_cast<size_t>(s.n_cells()) * nb * nb * d * 2);
    CellEval ce;
    Mat local(nb * d, nb * d);
    for (int c = 0; c < s.n_cells(); ++c) {
        eval_cell(s, c, q, ce);
        local.setZero();
        fn(c, ce, local);
        scatter(s, c, local, t);
    }
    return from_triplets(s.n_full(), s.n_full(), t);
}

}  // namespace

SpMat reduce(const FsiSpace& space, const SpMat& full) {
    SpMat r = SpMat(space.P.transpose()) * full * space.P;
    r.makeCompressed();
    return r;
}

SpMat weighted_mass(const FsiSpace& space, const SpMat& M_fluid, double varpi) {
    SpMat M = M_fluid;
    if (space.has_rigid()) {
        for (int k = 0; k < space.dim; ++k) M.coeffRef(space.rigid_offset + k, space.rigid_offset + k) += 1.0 / varpi;
    }
    M.makeCompressed();
    return M;
}

OperatorSet assemble(const FsiSpace& s, const NondimParams& params) {
    params.validate();
    OperatorSet ops;
    ops.params = params;
    const int d = s.dim, nb = p2_count(d);
    ops.Mf = assemble_velocity_matrix(s, [&](int, const CellEval& ce, Mat& L) {
        for (int k = 0; k < ce.nq; ++k)
            for (int a = 0; a < nb; ++a)
                for (int b = 0; b < nb; ++b) {
                    double v = ce.w[k] * ce.phi(k, a) * ce.phi(k, b);
                    for (int i = 0; i < d; ++i) L(a * d + i, b * d + i) += v;
                }
    });
    ops.Gf = assemble_velocity_matrix(s, [&](int, const CellEval& ce, Mat& L) {
        for (int k = 0; k < ce.nq; ++k) {
            Mat GG = ce.w[k] * ce.grad[k] * ce.grad[k].transpose();
            for (int a = 0; a < nb; ++a)
                for (int b = 0; b < nb; ++b)
                    for (int i = 0; i < d; ++i) L(a * d + i, b * d + i) += GG(a, b);
        }
    });
    ops.Af = assemble_velocity_matrix(s, [&](int, const CellEval& ce, Mat& L) {
        for (int k = 0; k < ce.nq; ++k) {
            const Mat& g = ce.grad[k];
            for (int a = 0; a < nb; ++a)
                for (int b = 0; b < nb; ++b) {
                    double gg = g.row(a).dot(g.row(b));
                    for (int i = 0; i < d; ++i)
                        for (int j = 0; j < d; ++j)
                            L(a * d + i, b * d + j) += ce.w[k] * ((i == j ? gg : 0.0) + g(a, j) * g(b, i));
                }
        }
    });
    ops.D1f = assemble_velocity_matrix(s, [&](int, const CellEval& ce, Mat& L) {
        for (int k = 0; k < ce.nq; ++k)
            for (int a = 0; a < nb; ++a)
                for (int b = 0; b < nb; ++b) {
                    double v = ce.w[k] * ce.phi(k, a) * ce.grad[k](b, 0);
                    for (int i = 0; i < d; ++i) L(a * d + i, b * d + i) += v;
                }
    });
    // divergence block
    {
        const QuadRule& q = rule(d, 5);
        Triplets t;
        CellEval ce;
        ops.pmass = Vec::Zero(s.n_p);
        for (int c = 0; c < s.n_cells(); ++c) {
            eval_cell(s, c, q, ce);
            const auto& cn = s.cell_nodes[c];
            const auto& pd = s.cell_pdofs[c];
            Mat local = Mat::Zero(d + 1, nb * d);
            for (int k = 0; k < ce.nq; ++k)
                for (int p = 0; p <= d; ++p) {
                    ops.pmass[pd[p]] += ce.w[k] * ce.psi(k, p);
                    for (int b = 0; b < nb; ++b)
                        for (int j = 0; j < d; ++j) local(p, b * d + j) -= ce.w[k] * ce.psi(k, p) * ce.grad[k](b, j);
                }
            for (int p = 0; p <= d; ++p)
                for (int b = 0; b < nb; ++b)
                    for (int j = 0; j < d; ++j)
                        if (local(p, b * d + j) != 0.0) t.emplace_back(pd[p], cn[b] * d + j, local(p, b * d + j));
        }
        ops.Bf = from_triplets(s.n_p, s.n_full(), t);
    }
    ops.Mf = symmetrized(ops.Mf);
    ops.Af = symmetrized(ops.Af);
    ops.Gf = symmetrized(ops.Gf);
    ops.M_fluid = symmetrized(reduce(s, ops.Mf));
    ops.M_w = symmetrized(weighted_mass(s, ops.M_fluid, params.varpi));
    ops.A_visc = symmetrized(reduce(s, ops.Af));
    ops.G = symmetrized(reduce(s, ops.Gf));
    ops.D1 = reduce(s, ops.D1f);
    ops.B = ops.Bf * s.P;
    ops.B.makeCompressed();
    return ops;
}

SpMat advection_matrix(const FsiSpace& s, const Vec& a) {
    const int d = s.dim, nb = p2_count(d);
    return assemble_velocity_matrix(s, [&](int c, const CellEval& ce, Mat& L) {
        Eigen::Vector3d av;
        Eigen::Matrix3d ag;
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, a, av, ag);
            Vec adg = ce.grad[k] * av.head(d);  // a . grad phi_b
            for (int va = 0; va < nb; ++va)
                for (int ub = 0; ub < nb; ++ub) {
                    double v = 0.5 * ce.w[k] * (adg[ub] * ce.phi(k, va) - adg[va] * ce.phi(k, ub));
                    for (int i = 0; i < d; ++i) L(va * d + i, ub * d + i) += v;
                }
        }
    });
}

SpMat transport_matrix(const FsiSpace& s, const Vec& u) {
    const int d = s.dim, nb = p2_count(d);
    return assemble_velocity_matrix(s, [&](int c, const CellEval& ce, Mat& L) {
        Eigen::Vector3d uv;
        Eigen::Matrix3d ug;
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, u, uv, ug);
            for (int va = 0; va < nb; ++va)
                for (int wb = 0; wb < nb; ++wb) {
                    double pp = ce.w[k] * ce.phi(k, va) * ce.phi(k, wb);
                    for (int i = 0; i < d; ++i)
                        for (int j = 0; j < d; ++j)
                            L(va * d + i, wb * d + j) +=
                                0.5 * (pp * ug(i, j) - ce.w[k] * ce.phi(k, wb) * ce.grad[k](va, j) * uv[i]);
                }
        }
    });
}

SpMat reaction_matrix(const FsiSpace& s, const Vec& w) {
    const int d = s.dim, nb = p2_count(d);
    return assemble_velocity_matrix(s, [&](int c, const CellEval& ce, Mat& L) {
        Eigen::Vector3d wv;
        Eigen::Matrix3d wg;
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, w, wv, wg);
            for (int va = 0; va < nb; ++va)
                for (int ub = 0; ub < nb; ++ub) {
                    double pp = ce.w[k] * ce.phi(k, va) * ce.phi(k, ub);
                    for (int i = 0; i < d; ++i)
                        for (int j = 0; j < d; ++j) L(va * d + i, ub * d + j) += pp * wg(i, j);
                }
        }
    });
}

Vec advection_apply(const FsiSpace& s, const Vec& a, const Vec& u) {
    const int d = s.dim, nb = p2_count(d);
    const QuadRule& q = rule(d, 5);
    Vec r = Vec::Zero(s.n_full());
    CellEval ce;
    Eigen::Vector3d av, uv;
    Eigen::Matrix3d ag, ug;
    for (int c = 0; c < s.n_cells(); ++c) {
        eval_cell(s, c, q, ce);
        const auto& cn = s.cell_nodes[c];
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, a, av, ag);
            field_at(s, ce, c, k, u, uv, ug);
            Eigen::Vector3d adu = ug * av;  // (a . grad) u
            Vec adg = ce.grad[k] * av.head(d);
            for (int va = 0; va < nb; ++va)
                for (int i = 0; i < d; ++i)
                    r[cn[va] * d + i] += 0.5 * ce.w[k] * (adu[i] * ce.phi(k, va) - adg[va] * uv[i]);
        }
    }
    return r;
}

double trilinear_raw(const FsiSpace& s, const Vec& a, const Vec& u, const Vec& v) {
    const QuadRule& q = rule(s.dim, 5);
    CellEval ce;
    Eigen::Vector3d av, uv, vv;
    Eigen::Matrix3d ag, ug, vg;
    double sum = 0.0;
    for (int c = 0; c < s.n_cells(); ++c) {
        eval_cell(s, c, q, ce);
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, a, av, ag);
            field_at(s, ce, c, k, u, uv, ug);
            field_at(s, ce, c, k, v, vv, vg);
            sum += ce.w[k] * (ug * av).dot(vv);
        }
    }
    return sum;
}

double advection_form(const FsiSpace& s, const Vec& a, const Vec& u, const Vec& v) {
    return advection_apply(s, a, u).dot(v);
}

Vec load_vector(const FsiSpace& s, const VectorField& f) {
    const int d = s.dim, nb = p2_count(d);
    const QuadRule& q = rule(d, 10);
    Vec r = Vec::Zero(s.n_full());
    CellEval ce;
    for (int c = 0; c < s.n_cells(); ++c) {
        eval_cell(s, c, q, ce);
        const auto& cn = s.cell_nodes[c];
        for (int k = 0; k < ce.nq; ++k) {
            Vec3 fv = f(ce.x[k]);
            for (int a = 0; a < nb; ++a)
                for (int i = 0; i < d; ++i) r[cn[a] * d + i] += ce.w[k] * fv[i] * ce.phi(k, a);
        }
    }
    return r;
}

double l2_error(const FsiSpace& s, const Vec& u, const VectorField& exact) {
    const int d = s.dim;
    const QuadRule& q = rule(d, 10);
    CellEval ce;
    Eigen::Vector3d uv;
    Eigen::Matrix3d ug;
    double sum = 0.0;
    for (int c = 0; c < s.n_cells(); ++c) {
        eval_cell(s, c, q, ce);
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, u, uv, ug);
            Vec3 e = exact(ce.x[k]);
            sum += ce.w[k] * (uv.head(d) - e.head(d)).squaredNorm();
        }
    }
    return std::sqrt(sum);
}

double lp_norm(const FsiSpace& s, const Vec& u, double p) {
    const QuadRule& q = rule(s.dim, 10);
    CellEval ce;
    Eigen::Vector3d uv;
    Eigen::Matrix3d ug;
    double sum = 0.0;
    for (int c = 0; c < s.n_cells(); ++c) {
        eval_cell(s, c, q, ce);
        for (int k = 0; k < ce.nq; ++k) {
            field_at(s, ce, c, k, u, uv, ug);
            sum += ce.w[k] * std::pow(uv.norm(), p);
        }
    }
    return std::pow(sum, 1.0 / p);
}

Vec body_functional(const FsiSpace& s, const Vec& r_full) { return s.Ebody.transpose() * r_full; }

Vec project_solenoidal(const FsiSpace& space, const OperatorSet& ops, const Vec& f) {
    (void)space;
    SaddleSolver solver(ops.M_w, ops.B, ops.pmass);
    return solver.solve_velocity(ops.M_w * f);
}

SanityConstants sanity_constants(const FsiSpace& space, const OperatorSet& ops, int n_samples) {
    SanityConstants r;
    r.kappa0_exponent = space.dim == 2 ? 4.0 : 6.0;
    // ||D u||^2 = 1/2 u^T A_visc u
    SpMat AD = 0.5 * ops.A_visc;
    if (space.has_rigid()) {
        SaddleSolver solver(AD, ops.B, ops.pmass);
        Mat E = Mat::Zero(space.n_red, space.dim);
        for (int k = 0; k < space.dim; ++k) E(space.rigid_offset + k, k) = 1.0;
        Mat Z = solver.solve_block(E);
        Mat Wm = E.transpose() * Z;
        Wm = 0.5 * (Wm + Wm.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(Wm);
        r.kappa1 = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    }
    int n = std::min<int>(n_samples, space.n_red - static_cast<int>(ops.B.rows()));
    if (n > 0) {
        ModalBasis basis = stokes_fsi_modes(space, ops, n);
        for (int i = 0; i < basis.N; ++i) {
            const Vec& psi = basis.modes.col(i);
            double dn = std::sqrt(std::max(0.0, psi.dot(AD * psi)));
            double lp = lp_norm(space, space.P * psi, r.kappa0_exponent);
            if (dn > 0.0) r.kappa0 = std::max(r.kappa0, lp / dn);
        }
        r.samples = basis.N;
    }
    return r;
}

void write_coo(const SpMat& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw PreconditionViolation("cannot write " + path);
    os.precision(17);
    os << "# rows " << m.rows() << " cols " << m.cols() << " nnz " << m.nonZeros() << '\n';
    for (int c = 0; c < m.outerSize(); ++c)
        for (SpMat::InnerIterator it(m, c); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace fsilab
