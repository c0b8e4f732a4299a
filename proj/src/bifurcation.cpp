// SPDX-License-Identifier: Apache-2.0
#include "fsilab/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "fsilab/errors.hpp"

namespace fsilab {

SpMat linearized_operator(const FsiSpace& s, const OperatorSet& ops, const Vec& u0, double lambda) {
    if (u0.size() != s.n_full()) throw PreconditionViolation("base flow does not match the space");
    SpMat Kf = ops.D1f - advection_matrix(s, u0) - transport_matrix(s, u0);
    return lambda * reduce(s, Kf);
}

Vec strain_base_flow(const FsiSpace& s, double kappa) {
    Vec u = Vec::Zero(s.n_full());
    for (int n = 0; n < s.n_nodes(); ++n) {
        const double x = s.nodes[n][0], y = s.nodes[n][1];
        const double e = std::exp(-(x * x + y * y) / 4.0);
        // psi = kappa x y e, u = (d psi / dy, -d psi / dx)
        u[n * s.dim] = kappa * x * e * (1.0 - 0.5 * y * y);
        u[n * s.dim + 1] = -kappa * y * e * (1.0 - 0.5 * x * x);
    }
    return u;
}

namespace {

SpMat identity(int n) {
    SpMat I(n, n);
    I.setIdentity();
    return I;
}

// Rotate a complex vector so its largest entry is real positive, then take the real part.
Vec realify(const Eigen::VectorXcd& v) {
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    std::complex<double> ph = std::abs(v[imax]) > 0 ? std::conj(v[imax]) / std::abs(v[imax]) : 1.0;
    return (v * ph).real();
}

void sort_by_distance(Eigen::VectorXcd& mu, Eigen::MatrixXcd* vecs, double sigma) {
    std::vector<int> idx(mu.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        double da = std::abs(mu[a] - sigma), db = std::abs(mu[b] - sigma);
        if (da != db) return da < db;
        return mu[a].imag() > mu[b].imag();
    });
    Eigen::VectorXcd m2(mu.size());
    Eigen::MatrixXcd v2;
    if (vecs) v2.resize(vecs->rows(), vecs->cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        m2[i] = mu[idx[i]];
        if (vecs) v2.col(i) = vecs->col(idx[i]);
    }
    mu = m2;
    if (vecs) *vecs = v2;
}

}  // namespace

PencilSample pencil_sample(const FsiSpace& s, const OperatorSet& ops, const Vec& u0, double lambda,
                           const NondimParams& params, const PencilOptions& opt, const Vec* previous) {
    if (!s.pinned) throw PreconditionViolation("the linearized pencil lives on the pinned space");
    PencilSample out;
    out.lambda = lambda;
    const int n = s.n_red;
    if (lambda == 0.0 || u0.size() != s.n_full()) {
        if (u0.size() != s.n_full()) throw PreconditionViolation("base flow does not match the space");
        out.no_candidate = true;
        out.cluster = Eigen::VectorXcd::Zero(opt.nev);
        return out;
    }
    const SpMat K = linearized_operator(s, ops, u0, lambda);
    const SpMat& A = ops.A_visc;
    EigMethod method = opt.method;
    if (method == EigMethod::Auto) method = n <= opt.dense_limit ? EigMethod::Dense : EigMethod::Iterative;
    Eigen::VectorXcd mus;
    Eigen::MatrixXcd vecs;
    if (method == EigMethod::Dense) {
        Mat Z = null_space_basis(Mat(ops.B));
        Mat Kd = Z.transpose() * (K * Z), Ad = Z.transpose() * (A * Z);
        Eigen::GeneralizedEigenSolver<Mat> es(Kd, Ad);
        if (es.info() != Eigen::Success) throw EigSolveFailure("dense pencil eigensolve failed");
        mus = es.eigenvalues();
        vecs = Z.cast<std::complex<double>>() * es.eigenvectors();
        sort_by_distance(mus, &vecs, opt.sigma);
        const int k = std::min<int>(opt.nev, static_cast<int>(mus.size()));
        mus.conservativeResize(k);
        vecs.conservativeResize(Eigen::NoChange, k);
        out.dense = true;
    } else {
        // the crossing sits exactly at sigma, so the factorized shift is displaced slightly
        const double shift = opt.sigma + 1e-3 * std::max(1.0, std::abs(opt.sigma));
        SpMat shifted = K - shift * A;
        SaddleSolver solver(shifted, ops.B, ops.pmass);
        BlockOp T = [&](const Mat& X) { return solver.solve_block(A * X); };
        KrylovOptions ko;
        ko.nev = opt.nev;
        ko.block = 4;
        ko.max_basis = std::max(60, 3 * opt.nev);
        ko.max_restarts = 40;
        ko.tol = opt.tol;
        ko.seed = opt.seed;
        // eigenvalues far from sigma pile up near nu = -1 and converge slowly; only the nearest one must meet tol
        ko.lead = 1;
        bool done = false;
        if (!opt.dominant) {
            try {
                EigResultC er = block_arnoldi(n, T, ko);
                mus.resize(er.values.size());
                for (int i = 0; i < er.values.size(); ++i) mus[i] = shift + 1.0 / er.values[i];
                vecs = er.vectors;
                done = true;
            } catch (const EigSolveFailure&) {
            }
        }
        if (!done) {
            // a spectrum clustered far from sigma defeats the shift; A^{-1} K is compact, so take its
            // dominant eigenvalues instead
            SaddleSolver stokes(A, ops.B, ops.pmass);
            BlockOp D = [&](const Mat& X) { return stokes.solve_block(K * X); };
            ko.lead = opt.nev;
            EigResultC er = block_arnoldi(n, D, ko);
            mus = er.values;
            vecs = er.vectors;
        }
        sort_by_distance(mus, &vecs, opt.sigma);
    }
    out.cluster = mus;
    out.mu = mus[0];
    out.complex_pair = std::abs(out.mu.imag()) >= opt.complex_tol * std::abs(out.mu);
    Vec w = realify(vecs.col(0));
    const SpMat& M = ops.M_w;
    w /= std::sqrt(w.dot(M * w));
    Eigen::Index imax;
    w.cwiseAbs().maxCoeff(&imax);
    if (w[imax] < 0) w = -w;
    out.w = w;
    if (previous && previous->size() == w.size()) {
        double pn = std::sqrt(previous->dot(M * *previous));
        out.overlap = pn > 0 ? std::abs(w.dot(M * *previous)) / pn : 0.0;
        out.path_jump = out.overlap <= 0.5;
    }
    const double mu = out.mu.real();
    // eigen-residual and pressure by least squares on the constraint
    SaddleSolver ls(identity(n), ops.B, ops.pmass);
    Vec Kw = K * w, Aw = A * w;
    Vec f = Kw - mu * Aw, rem, phi;
    ls.solve(f, Vec(), rem, &phi);
    out.residual = rem.norm() / std::max(Kw.norm(), 1e-300);
    if (out.complex_pair) {
        // the real vector above is only half of the eigenpair; measure the complex residual
        const Eigen::VectorXcd v = vecs.col(0);
        const Vec vr = v.real(), vi = v.imag();
        const double a = out.mu.real(), b = out.mu.imag();
        const Vec Kr = K * vr, Ki = K * vi, Ar = A * vr, Ai = A * vi;
        Vec rr, ri;
        ls.solve(Vec(Kr - a * Ar + b * Ai), Vec(), rr);
        ls.solve(Vec(Ki - a * Ai - b * Ar), Vec(), ri);
        out.residual = std::sqrt(rr.squaredNorm() + ri.squaredNorm()) /
                       std::max(std::sqrt(Kr.squaredNorm() + Ki.squaredNorm()), 1e-300);
        return out;
    }

    // left eigenvector by inverse iteration on the transposed system
    const double adj_shift = mu + 1e-7 * std::max(1.0, std::abs(mu));
    SaddleSolver adj(K - adj_shift * A, ops.B, ops.pmass, true);
    SpMat At = A.transpose();
    Vec y = w;
    for (int it = 0; it < 6; ++it) {
        Vec y1 = adj.solve_velocity(At * y);
        y = y1 / y1.norm();
    }
    double pair = y.dot(Aw);
    if (pair == 0.0) throw InvalidEigenvector("left and right eigenvectors are orthogonal");
    y /= pair;
    out.w_adj = y;
    out.pairing = y.dot(A * w);
    out.adjoint_consistency = std::abs(y.dot(Kw) - mu * y.dot(Aw)) / std::max(std::abs(mu), 1e-300);

    // spring elongation from the body functional of the eigen-equation divided by mu
    if (mu != 0.0) {
        Vec wf = s.P * w;
        SpMat Kf = lambda * (ops.D1f - advection_matrix(s, u0) - transport_matrix(s, u0));
        Vec r = mu * (ops.Af * wf) + SpMat(ops.Bf.transpose()) * phi - Kf * wf;
        out.chi = -(params.varpi / params.omega_n2) * body_functional(s, r) / mu;
    }
    return out;
}

EigenPath linearized_eigenpath(const Branch& branch, const FsiSpace& s, const OperatorSet& ops,
                               const NondimParams& params, double lmin, double lmax, const PencilOptions& opt) {
    if (!(lmin < lmax)) throw PreconditionViolation("lambda window must satisfy lambda_min < lambda_max");
    EigenPath path;
    Vec prev;
    for (const auto& st : branch.states) {
        if (st.lambda < lmin || st.lambda > lmax) continue;
        path.samples.push_back(pencil_sample(s, ops, st.u_full, st.lambda, params, opt, prev.size() ? &prev : nullptr));
        if (!path.samples.back().no_candidate) prev = path.samples.back().w;
    }
    return path;
}

EigenPath frozen_eigenpath(const FsiSpace& s, const OperatorSet& ops, const Vec& u0, const NondimParams& params,
                           const std::vector<double>& lambdas, const PencilOptions& opt) {
    EigenPath path;
    path.samples.reserve(lambdas.size());
    const Vec* prev = nullptr;
    for (double l : lambdas) {
        path.samples.push_back(pencil_sample(s, ops, u0, l, params, opt, prev));
        if (!path.samples.back().no_candidate) prev = &path.samples.back().w;
    }
    return path;
}

std::vector<double> detect_crossing(const std::vector<double>& lambdas, const std::vector<double>& mu,
                                    const MuEvaluator& evaluate, double tol) {
    if (lambdas.size() != mu.size()) throw PreconditionViolation("path arrays differ in length");
    std::vector<double> out;
    for (size_t i = 0; i + 1 < lambdas.size(); ++i) {
        double a = lambdas[i], b = lambdas[i + 1];
        double fa = mu[i] - 1.0, fb = mu[i + 1] - 1.0;
        if (!std::isfinite(fa) || !std::isfinite(fb)) continue;
        if (fa == 0.0) {
            if (out.empty() || out.back() != a) out.push_back(a);
            continue;
        }
        if (fa * fb > 0.0) continue;
        if (fb == 0.0) continue;  // recorded at the next interval
        // regula falsi with the Illinois modification
        double c = b - fb * (b - a) / (fb - fa), fc = 0.0;
        int side = 0;
        for (int it = 0; it < 100; ++it) {
            c = b - fb * (b - a) / (fb - fa);
            if (!evaluate) break;
            fc = evaluate(c) - 1.0;
            if (std::abs(fc) < tol) break;
            if (fc * fb < 0.0) {
                a = b;
                fa = fb;
                b = c;
                fb = fc;
                if (side == -1) fa *= 0.5;
                side = -1;
            } else {
                b = c;
                fb = fc;
                fa *= 0.5;
                side = 1;
            }
        }
        out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> detect_crossing(const EigenPath& path, const MuEvaluator& evaluate, double tol) {
    if (path.samples.size() < 2) throw PreconditionViolation("crossing detection needs at least two samples");
    std::vector<double> l, m;
    for (const auto& s : path.samples) {
        l.push_back(s.lambda);
        m.push_back(s.no_candidate || s.complex_pair ? std::numeric_limits<double>::quiet_NaN() : s.mu.real());
    }
    return detect_crossing(l, m, evaluate, tol);
}

SimplicityResult simplicity_check_dense(const Mat& K, const Mat& A, const Vec& w1, double range_threshold,
                                        double cluster_tol) {
    if (w1.size() != K.rows() || !(w1.norm() > 0.0)) throw InvalidEigenvector("W1 must be a nonzero vector");
    SimplicityResult r;
    r.range_threshold = range_threshold;
    r.cluster_tol = cluster_tol;
    Eigen::GeneralizedEigenSolver<Mat> es(K, A);
    if (es.info() != Eigen::Success) throw EigSolveFailure("dense pencil eigensolve failed");
    Eigen::VectorXcd mu = es.eigenvalues();
    sort_by_distance(mu, nullptr, 1.0);
    for (int i = 0; i < mu.size(); ++i)
        if (std::abs(mu[i] - mu[0]) < cluster_tol * std::max(1.0, std::abs(mu[0]))) ++r.kernel_dim;
    Mat L = A - K;
    Vec f = A * w1;
    Eigen::JacobiSVD<Mat> svd(L, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    Vec W = svd.solve(f);
    r.range_residual = (L * W - f).norm() / f.norm();
    r.simple = r.kernel_dim == 1 && r.range_residual > range_threshold;
    return r;
}

SimplicityResult simplicity_check(const PencilSample& at, const FsiSpace& s, const OperatorSet& ops, const Vec& u0,
                                  double range_threshold, double cluster_tol) {
    (void)u0;
    if (at.w.size() != s.n_red || !(at.w.norm() > 0.0)) throw InvalidEigenvector("W1 must be a nonzero vector");
    if (at.w_adj.size() != s.n_red) throw InvalidEigenvector("left eigenvector missing (complex or empty sample)");
    SimplicityResult r;
    r.range_threshold = range_threshold;
    r.cluster_tol = cluster_tol;
    for (int i = 0; i < at.cluster.size(); ++i)
        if (std::abs(at.cluster[i] - at.mu) < cluster_tol * std::max(1.0, std::abs(at.mu))) ++r.kernel_dim;
    // L W = A W1 is solvable on the constrained space iff y^T A W1 = 0 for the left null vector y
    Vec f = ops.A_visc * at.w;
    SaddleSolver ls(identity(s.n_red), ops.B, ops.pmass);
    Vec pf = ls.solve_velocity(f);
    r.range_residual = std::abs(at.w_adj.dot(f)) / (at.w_adj.norm() * pf.norm());
    r.simple = r.kernel_dim == 1 && r.range_residual > range_threshold;
    return r;
}

Transversality transversality(double ls, const MuEvaluator& evaluate, double delta, double eig_noise) {
    if (!(delta > 0.0)) throw PreconditionViolation("delta must be > 0");
    Transversality t;
    t.delta = delta;
    t.slope_coarse = (evaluate(ls + delta) - evaluate(ls - delta)) / (2.0 * delta);
    const double h = 0.5 * delta;
    t.slope_fine = (evaluate(ls + h) - evaluate(ls - h)) / (2.0 * h);
    const double scale = std::max(std::abs(t.slope_coarse), std::abs(t.slope_fine));
    if (std::abs(t.slope_coarse - t.slope_fine) > 0.5 * scale)
        throw FDInconclusive("finite-difference slopes " + std::to_string(t.slope_coarse) + " and " +
                             std::to_string(t.slope_fine) + " disagree");
    t.slope = (4.0 * t.slope_fine - t.slope_coarse) / 3.0;
    t.mu_prime = -t.slope;
    t.noise = eig_noise / h;
    t.nonzero = std::abs(t.slope) > 10.0 * t.noise;
    return t;
}

BifurcationReport report(std::optional<double> lambda_s, double mu_at, const SimplicityResult& simp,
                         const std::optional<Transversality>& trans, const std::string& trans_error,
                         double tol_cross) {
    BifurcationReport r;
    r.simplicity = simp;
    r.trans = trans;
    r.trans_error = trans_error;
    if (!lambda_s) {
        r.verdict = "no candidate";
        return r;
    }
    r.lambda_s = *lambda_s;
    r.mu_residual = std::abs(mu_at - 1.0);
    r.candidate = r.mu_residual < tol_cross;
    if (!r.candidate || simp.kernel_dim == 0) {
        r.candidate = false;
        r.verdict = "no candidate";
    } else if (simp.kernel_dim > 1) {
        r.verdict = "multiple eigenvalue, outside the simple-crossing theory";
    } else if (!(simp.range_residual > simp.range_threshold)) {
        r.verdict = "candidate, range condition fails";
    } else if (!trans || !trans->nonzero) {
        r.verdict = "candidate, transversality unresolved";
    } else {
        r.verdict = "bifurcation point certified (numerically)";
    }
    return r;
}

}  // namespace fsilab
