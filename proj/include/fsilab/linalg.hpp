// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <functional>
#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "fsilab/space.hpp"

namespace fsilab {

using Mat = Eigen::MatrixXd;

enum class EigMethod { Auto, Iterative, Dense };

/// Sparse direct solver for
///   [ K  B^T  0 ] [x]   [f]
///   [ B  0    m ] [p] = [g]
///   [ 0  m^T  0 ] [s]   [0]
/// where m pins the pressure mean. With transpose = true K is replaced by K^T.
class SaddleSolver {
public:
    SaddleSolver() = default;
    SaddleSolver(const SpMat& K, const SpMat& B, const Vec& gauge, bool transpose = false);

    void solve(const Vec& f, const Vec& g, Vec& x, Vec* p = nullptr) const;
    Vec solve_velocity(const Vec& f) const;
    /// Column-wise solve with g = 0.
    Mat solve_block(const Mat& F) const;
    bool valid() const { return static_cast<bool>(impl_); }
    int n() const { return n_; }
    int m() const { return m_; }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    int n_ = 0;
    int m_ = 0;
};

/// General sparse LU (no constraint block).
class SparseLU {
public:
    SparseLU() = default;
    explicit SparseLU(const SpMat& A);
    Vec solve(const Vec& b) const;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

using BlockOp = std::function<Mat(const Mat&)>;

struct SymEigResult {
    Vec values;    // descending
    Mat vectors;   // W-orthonormal columns
    Vec residuals; // ||T x - theta x||_W / max|theta|
    int restarts = 0;
    int applications = 0;
    bool converged = false;
};

struct KrylovOptions {
    int nev = 1;
    int block = 4;
    int max_basis = 80;
    int max_restarts = 60;
    double tol = 1e-10;
    unsigned seed = 12345;
    /// block_arnoldi: number of leading eigenvalues that must meet tol (0 means all nev).
    int lead = 0;
};

/// Largest algebraic eigenvalues of an operator T that is self-adjoint in the
/// inner product x^T W y. The first basis block is T applied to random vectors,
/// so the iteration stays in the range of T.
SymEigResult block_krylov_symmetric(int n, const BlockOp& T, const BlockOp& W, const KrylovOptions& opt);

struct EigResultC {
    Eigen::VectorXcd values;  // decreasing modulus
    Eigen::MatrixXcd vectors; // unit Euclidean norm
    Vec residuals;            // ||T x - nu x|| / |nu|
    int restarts = 0;
    bool converged = false;
};

/// Eigenvalues of largest modulus of a general operator (block Arnoldi, explicit restarts).
EigResultC block_arnoldi(int n, const BlockOp& T, const KrylovOptions& opt);

/// Orthonormal basis of the null space of a dense matrix.
Mat null_space_basis(const Mat& B, double rel_tol = 1e-10);

}  // namespace fsilab
