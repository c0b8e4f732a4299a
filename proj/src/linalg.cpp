// SPDX-License-Identifier: Apache-2.0
#include "fsilab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <Eigen/UmfPackSupport>

#include "fsilab/errors.hpp"

namespace fsilab {

// UmfPackLU keeps a reference to the factorized matrix, so the matrix lives here too.
struct SaddleSolver::Impl {
    SpMat S;
    Eigen::UmfPackLU<SpMat> lu;
};

SaddleSolver::SaddleSolver(const SpMat& K, const SpMat& B, const Vec& gauge, bool transpose) {
    n_ = static_cast<int>(K.rows());
    m_ = static_cast<int>(B.rows());
    if (K.cols() != n_ || B.cols() != n_ || gauge.size() != m_)
        throw SaddleSolveFailure("inconsistent saddle block sizes");
    const int N = n_ + m_ + 1;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(K.nonZeros() + 2 * B.nonZeros() + 2 * m_));
    for (int c = 0; c < K.outerSize(); ++c)
        for (SpMat::InnerIterator it(K, c); it; ++it) {
            if (transpose) t.emplace_back(it.col(), it.row(), it.value());
            else t.emplace_back(it.row(), it.col(), it.value());
        }
    for (int c = 0; c < B.outerSize(); ++c)
        for (SpMat::InnerIterator it(B, c); it; ++it) {
            t.emplace_back(n_ + it.row(), it.col(), it.value());
            t.emplace_back(it.col(), n_ + it.row(), it.value());
        }
    for (int q = 0; q < m_; ++q) {
        if (gauge[q] == 0.0) continue;
        t.emplace_back(n_ + q, n_ + m_, gauge[q]);
        t.emplace_back(n_ + m_, n_ + q, gauge[q]);
    }
    impl_ = std::make_shared<Impl>();
    SpMat& S = impl_->S;
    S.resize(N, N);
    S.setFromTriplets(t.begin(), t.end());
    S.makeCompressed();
    impl_->lu.compute(S);
    if (impl_->lu.info() != Eigen::Success) throw SaddleSolveFailure("sparse LU factorization failed");
}

void SaddleSolver::solve(const Vec& f, const Vec& g, Vec& x, Vec* p) const {
    if (!impl_) throw SaddleSolveFailure("solver not factorized");
    Vec rhs = Vec::Zero(n_ + m_ + 1);
    rhs.head(n_) = f;
    if (g.size() == m_) rhs.segment(n_, m_) = g;
    Vec sol = impl_->lu.solve(rhs);
    if (impl_->lu.info() != Eigen::Success || !sol.allFinite()) throw SaddleSolveFailure("back substitution failed");
    x = sol.head(n_);
    if (p) *p = sol.segment(n_, m_);
}

Vec SaddleSolver::solve_velocity(const Vec& f) const {
    Vec x;
    solve(f, Vec(), x);
    return x;
}

Mat SaddleSolver::solve_block(const Mat& F) const {
    Mat X(n_, F.cols());
    for (int j = 0; j < F.cols(); ++j) X.col(j) = solve_velocity(F.col(j));
    return X;
}

struct SparseLU::Impl {
    SpMat C;
    Eigen::UmfPackLU<SpMat> lu;
};

SparseLU::SparseLU(const SpMat& A) {
    impl_ = std::make_shared<Impl>();
    impl_->C = A;
    impl_->C.makeCompressed();
    impl_->lu.compute(impl_->C);
    if (impl_->lu.info() != Eigen::Success) throw LinearSolveFailure("sparse LU factorization failed");
}

Vec SparseLU::solve(const Vec& b) const {
    Vec x = impl_->lu.solve(b);
    if (!x.allFinite()) throw LinearSolveFailure("sparse LU produced non-finite values");
    return x;
}

namespace {

Mat random_block(int n, int k, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat X(n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i) X(i, j) = nd(rng);
    return X;
}

// Growing basis with W-orthonormal columns and cached W V and T V.
struct KrylovBasis {
    Mat V, WV, TV;
    int m = 0;
    void reserve(int n, int cap) {
        V.resize(n, cap);
        WV.resize(n, cap);
        TV.resize(n, cap);
    }
};

// Appends the W-orthonormalized columns of Y; returns the number appended.
int append_block(KrylovBasis& b, const Mat& Y, const BlockOp& W, int cap) {
    int added = 0;
    for (int j = 0; j < Y.cols() && b.m < cap; ++j) {
        Vec y = Y.col(j);
        Vec wy = W(y);
        double n0 = std::sqrt(std::max(0.0, y.dot(wy)));
        if (!(n0 > 0.0) || !std::isfinite(n0)) continue;
        for (int pass = 0; pass < 2; ++pass) {
            if (b.m == 0) break;
            Vec h = b.WV.leftCols(b.m).transpose() * y;
            y -= b.V.leftCols(b.m) * h;
        }
        wy = W(y);
        double nrm = std::sqrt(std::max(0.0, y.dot(wy)));
        if (!(nrm > 1e-12 * n0)) continue;
        b.V.col(b.m) = y / nrm;
        b.WV.col(b.m) = wy / nrm;
        ++b.m;
        ++added;
    }
    return added;
}

}  // namespace

SymEigResult block_krylov_symmetric(int n, const BlockOp& T, const BlockOp& W, const KrylovOptions& opt) {
    SymEigResult res;
    const int cap = std::min(n, std::max(opt.max_basis, opt.nev + 2 * opt.block));
    if (opt.nev > cap) throw EigSolveFailure("requested more eigenpairs than the space dimension");
    KrylovBasis b;
    b.reserve(n, cap);
    Mat pending = T(random_block(n, opt.block, opt.seed));
    res.applications += opt.block;
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        res.restarts = restart;
        bool stuck = false;
        while (b.m < cap && pending.cols() > 0) {
            int start = b.m;
            int added = append_block(b, pending, W, cap);
            if (added == 0) {
                stuck = true;
                break;
            }
            Mat Tn = T(b.V.middleCols(start, added));
            res.applications += added;
            b.TV.middleCols(start, added) = Tn;
            pending = Tn;
        }
        const int m = b.m;
        if (m == 0) {
            // T annihilates the start block: the spectrum seen from here is {0}
            res.values = Vec::Zero(opt.nev);
            res.vectors = Mat::Zero(n, opt.nev);
            res.residuals = Vec::Zero(opt.nev);
            res.converged = true;
            return res;
        }
        Mat H = b.WV.leftCols(m).transpose() * b.TV.leftCols(m);
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(H);
        Vec theta = es.eigenvalues().reverse();
        Mat S = es.eigenvectors().rowwise().reverse();
        const int k = std::min(opt.nev, m);
        double scale = std::max(std::abs(theta[0]), std::abs(theta[m - 1]));
        if (!(scale > 0.0)) scale = 1.0;
        Mat X = b.V.leftCols(m) * S.leftCols(k);
        Mat TX = b.TV.leftCols(m) * S.leftCols(k);
        Mat WX = b.WV.leftCols(m) * S.leftCols(k);
        Mat Rm = TX - X * theta.head(k).asDiagonal();
        Vec resid(k);
        for (int j = 0; j < k; ++j) {
            Vec wr = W(Rm.col(j));
            resid[j] = std::sqrt(std::max(0.0, Rm.col(j).dot(wr))) / scale;
        }
        const int need = opt.lead > 0 ? std::min(opt.lead, k) : k;
        bool done = k == opt.nev && (resid.head(need).array() <= opt.tol).all();
        bool exhausted = (m == n) || stuck || pending.cols() == 0;
        if (done || restart == opt.max_restarts || exhausted) {
            res.values = theta.head(k);
            res.vectors = X;
            res.residuals = resid;
            res.converged = done || (exhausted && k == opt.nev);
            if (!res.converged) throw EigSolveFailure("block Krylov iteration did not converge");
            return res;
        }
        // thick restart on the wanted Ritz vectors plus a few more
        const int keep = std::min(m, opt.nev + opt.block);
        Mat Sk = S.leftCols(keep);
        Mat V2 = b.V.leftCols(m) * Sk, W2 = b.WV.leftCols(m) * Sk, T2 = b.TV.leftCols(m) * Sk;
        b.V.leftCols(keep) = V2;
        b.WV.leftCols(keep) = W2;
        b.TV.leftCols(keep) = T2;
        b.m = keep;
        std::vector<int> open;
        for (int j = 0; j < k; ++j)
            if (resid[j] > opt.tol) open.push_back(j);
        for (int j = k; j < keep && static_cast<int>(open.size()) < opt.block; ++j) open.push_back(j);
        Mat Rall = T2 - V2 * theta.head(keep).asDiagonal();
        pending.resize(n, std::min<int>(opt.block, static_cast<int>(open.size())));
        for (int j = 0; j < pending.cols(); ++j) pending.col(j) = Rall.col(open[j]);
    }
    throw EigSolveFailure("block Krylov iteration did not converge");
}

EigResultC block_arnoldi(int n, const BlockOp& T, const KrylovOptions& opt) {
    EigResultC res;
    const int cap = std::min(n, std::max(opt.max_basis, opt.nev + 3 * opt.block));
    KrylovBasis b;
    b.reserve(n, cap);
    BlockOp ident = [](const Mat& X) { return X; };
    Mat pending = T(random_block(n, opt.block, opt.seed));
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        res.restarts = restart;
        bool stuck = false;
        while (b.m < cap && pending.cols() > 0) {
            int start = b.m;
            int added = append_block(b, pending, ident, cap);
            if (added == 0) {
                stuck = true;
                break;
            }
            Mat Tn = T(b.V.middleCols(start, added));
            b.TV.middleCols(start, added) = Tn;
            pending = Tn;
        }
        const int m = b.m;
        if (m == 0) throw EigSolveFailure("operator annihilates the start block");
        Mat H = b.V.leftCols(m).transpose() * b.TV.leftCols(m);
        Eigen::EigenSolver<Mat> es(H);
        if (es.info() != Eigen::Success) throw EigSolveFailure("Hessenberg eigensolve failed");
        Eigen::VectorXcd nu = es.eigenvalues();
        Eigen::MatrixXcd S = es.eigenvectors();
        std::vector<int> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
            if (std::abs(std::abs(nu[a]) - std::abs(nu[c])) > 1e-14 * std::abs(nu[a])) return std::abs(nu[a]) > std::abs(nu[c]);
            return nu[a].imag() > nu[c].imag();
        });
        const int k = std::min(opt.nev, m);
        const int keep = std::min(m, opt.nev + opt.block);
        Eigen::MatrixXcd Vc = b.V.leftCols(m).cast<std::complex<double>>();
        Eigen::MatrixXcd TVc = b.TV.leftCols(m).cast<std::complex<double>>();
        Eigen::VectorXcd vals(k);
        Eigen::MatrixXcd X(n, k);
        Vec resid(k);
        std::vector<Eigen::VectorXcd> resvec(keep);
        for (int j = 0; j < keep; ++j) {
            Eigen::VectorXcd s = S.col(order[j]);
            s /= s.norm();
            Eigen::VectorXcd x = Vc * s;
            Eigen::VectorXcd r = TVc * s - nu[order[j]] * x;
            resvec[j] = r;
            if (j < k) {
                vals[j] = nu[order[j]];
                X.col(j) = x;
                resid[j] = r.norm() / std::max(std::abs(nu[order[j]]), 1e-300);
            }
        }
        const int need = opt.lead > 0 ? std::min(opt.lead, k) : k;
        bool done = k == opt.nev && (resid.head(need).array() <= opt.tol).all();
        bool exhausted = (m == n) || stuck || pending.cols() == 0;
        if (done || restart == opt.max_restarts || exhausted) {
            res.values = vals;
            res.vectors = X;
            res.residuals = resid;
            res.converged = done || (exhausted && k == opt.nev);
            if (!res.converged) throw EigSolveFailure("block Arnoldi iteration did not converge");
            return res;
        }
        // restart on the real span of the wanted Ritz vectors
        Mat C(m, 2 * keep);
        for (int j = 0; j < keep; ++j) {
            Eigen::VectorXcd s = S.col(order[j]);
            C.col(2 * j) = s.real();
            C.col(2 * j + 1) = s.imag();
        }
        Eigen::ColPivHouseholderQR<Mat> qr(C);
        qr.setThreshold(1e-10);
        int r = static_cast<int>(qr.rank());
        Mat Q = qr.householderQ() * Mat::Identity(m, r);
        Mat V2 = b.V.leftCols(m) * Q, T2 = b.TV.leftCols(m) * Q;
        b.V.leftCols(r) = V2;
        b.WV.leftCols(r) = V2;
        b.TV.leftCols(r) = T2;
        b.m = r;
        std::vector<Vec> pend;
        for (int j = 0; j < keep && static_cast<int>(pend.size()) < opt.block; ++j) {
            if (j < k && resid[j] <= opt.tol) continue;
            pend.push_back(resvec[j].real());
            if (resvec[j].imag().norm() > 0.0) pend.push_back(resvec[j].imag());
        }
        pending.resize(n, static_cast<int>(pend.size()));
        for (size_t j = 0; j < pend.size(); ++j) pending.col(static_cast<int>(j)) = pend[j];
    }
    throw EigSolveFailure("block Arnoldi iteration did not converge");
}

Mat null_space_basis(const Mat& B, double rel_tol) {
    const int n = static_cast<int>(B.cols());
    if (B.rows() == 0) return Mat::Identity(n, n);
    Eigen::ColPivHouseholderQR<Mat> qr(B.transpose());
    qr.setThreshold(rel_tol);
    int r = static_cast<int>(qr.rank());
    Mat Q = qr.householderQ();
    return Q.rightCols(n - r);
}

}  // namespace fsilab
