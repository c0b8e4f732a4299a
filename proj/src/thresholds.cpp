// SPDX-License-Identifier: Apache-2.0
#include "fsilab/thresholds.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "fsilab/errors.hpp"

namespace fsilab {

double ThresholdResult::raw_mismatch() const {
    double diff = std::abs(raw_quotient - theta);
    return theta != 0.0 ? diff / std::abs(theta) : diff;
}

ThresholdPencil threshold_pencil(const SteadyState& state, const FsiSpace& space, const OperatorSet& ops) {
    if (state.u_full.size() != space.n_full())
        throw PreconditionViolation("steady state and space live on different meshes");
    // b(x, y) = -((P - Pc) x . grad u0, P y); the pinned space has Pc = 0
    SpMat R = reaction_matrix(space, state.u_full);
    SpMat rel = space.has_rigid() ? SpMat(space.P - space.Pc) : space.P;
    SpMat S = -(SpMat(space.P.transpose()) * R * rel);
    SpMat St = S.transpose();
    ThresholdPencil pen;
    pen.S = 0.5 * (S + St);
    pen.G = ops.G;
    return pen;
}

namespace {

ThresholdResult compute(ThresholdKind kind, const SteadyState& state, const FsiSpace& space, const OperatorSet& ops,
                        const ThresholdOptions& opt) {
    if (state.residual > opt.state_tol)
        throw NonConvergedState("steady residual " + std::to_string(state.residual) + " above tolerance");
    ThresholdPencil pen = threshold_pencil(state, space, ops);
    ThresholdResult r;
    r.kind = kind;
    const int n = space.n_red;
    EigMethod method = opt.method;
    if (method == EigMethod::Auto) method = n <= opt.dense_limit ? EigMethod::Dense : EigMethod::Iterative;
    Vec x;
    if (method == EigMethod::Dense) {
        Mat Z = null_space_basis(Mat(ops.B));
        Mat Sd = Z.transpose() * (pen.S * Z);
        Mat Gd = Z.transpose() * (pen.G * Z);
        Sd = 0.5 * (Sd + Sd.transpose()).eval();
        Gd = 0.5 * (Gd + Gd.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Sd, Gd);
        if (es.info() != Eigen::Success) throw EigSolveFailure("dense threshold pencil failed");
        const Eigen::Index top = es.eigenvalues().size() - 1;
        r.theta = es.eigenvalues()[top];
        Vec y = es.eigenvectors().col(top);
        Vec Sy = Sd * y;
        r.eig_residual = (Sy - r.theta * (Gd * y)).norm() / std::max(Sy.norm(), 1e-300);
        x = Z * y;
        r.dense = true;
        r.dofs = static_cast<int>(Z.cols());
    } else {
        SaddleSolver solver(pen.G, ops.B, ops.pmass);
        BlockOp T = [&](const Mat& X) { return solver.solve_block(pen.S * X); };
        BlockOp W = [&](const Mat& X) { return Mat(pen.G * X); };
        KrylovOptions ko;
        ko.nev = 2;
        ko.block = 4;
        ko.max_basis = 60;
        ko.max_restarts = 200;
        ko.tol = opt.tol;
        ko.seed = opt.seed;
        SymEigResult er = block_krylov_symmetric(n, T, W, ko);
        r.theta = er.values[0];
        x = er.vectors.col(0);
        r.eig_residual = er.residuals[0];
        r.dofs = n;
    }
    double gn = x.dot(pen.G * x);
    if (gn > 0.0) x /= std::sqrt(gn);
    r.maximizer = x;
    r.infinite = !(r.theta > 0.0);
    if (gn > 0.0) {
        // raw quotient ((u - u_hat) . grad u, u0) / ||grad u||^2
        Vec uf = space.P * x;
        Vec rel = space.has_rigid() ? Vec(uf - space.Pc * x) : uf;
        r.raw_quotient = trilinear_raw(space, rel, uf, state.u_full) / x.dot(pen.G * x);
    }
    if (r.infinite) r.theta = std::max(r.theta, 0.0);
    return r;
}

}  // namespace

ThresholdResult lambda1(const SteadyState& state, const FsiSpace& pinned, const OperatorSet& ops,
                        const ThresholdOptions& opt) {
    if (!pinned.pinned) throw PreconditionViolation("lambda1 needs the pinned space");
    return compute(ThresholdKind::Lambda1, state, pinned, ops, opt);
}

ThresholdResult lambda2(const SteadyState& state, const FsiSpace& unpinned, const OperatorSet& ops,
                        const ThresholdOptions& opt) {
    if (unpinned.pinned) throw PreconditionViolation("lambda2 needs the unpinned space");
    return compute(ThresholdKind::Lambda2, state, unpinned, ops, opt);
}

std::optional<LambdaTilde> find_lambda_tilde(const std::function<double(double)>& lambda1_of,
                                             const std::vector<double>& samples, double ftol, int max_iter) {
    if (samples.empty()) return std::nullopt;
    LambdaTilde out;
    auto f = [&](double l) {
        double l1 = lambda1_of(l);
        out.evaluations.emplace_back(l, l1);
        return std::isinf(l1) ? -std::numeric_limits<double>::infinity() : l - l1;
    };
    double prev_l = samples[0], prev_f = f(prev_l);
    if (prev_f >= 0.0) {
        out.lambda = out.lo = out.hi = prev_l;
        out.f = prev_f;
        return out;
    }
    for (size_t i = 1; i < samples.size(); ++i) {
        double l = samples[i], fl = f(l);
        if (fl < 0.0) {
            prev_l = l;
            prev_f = fl;
            continue;
        }
        double lo = prev_l, hi = l, flo = prev_f, fhi = fl;
        double mid = hi, fm = fhi;
        for (int it = 0; it < max_iter; ++it) {
            if (std::abs(fhi) < ftol) {
                mid = hi;
                fm = fhi;
                break;
            }
            mid = 0.5 * (lo + hi);
            fm = f(mid);
            if (std::abs(fm) < ftol || hi - lo < 1e-14 * std::max(1.0, hi)) break;
            if (fm < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
        }
        (void)flo;
        out.lambda = mid;
        out.f = fm;
        out.lo = lo;
        out.hi = hi;
        return out;
    }
    return std::nullopt;
}

std::optional<LambdaTilde> find_lambda_tilde(const Branch& branch, const FsiSpace& pinned, const OperatorSet& ops,
                                             const NondimParams& params, const ThresholdOptions& opt,
                                             double ftol) {
    std::vector<double> samples;
    for (const auto& s : branch.states) samples.push_back(s.lambda);
    auto lambda1_of = [&](double l) {
        for (const auto& s : branch.states)
            if (s.lambda == l) return lambda1(s, pinned, ops, opt).value();
        // fresh solve, warm-started from the nearest branch state
        const SteadyState* near = nullptr;
        for (const auto& s : branch.states)
            if (!near || std::abs(s.lambda - l) < std::abs(near->lambda - l)) near = &s;
        NondimParams p = params;
        p.lambda = l;
        SteadyState st = solve_steady(pinned, ops, p, near);
        return lambda1(st, pinned, ops, opt).value();
    };
    return find_lambda_tilde(lambda1_of, samples, ftol);
}

}  // namespace fsilab
