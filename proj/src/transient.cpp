// SPDX-License-Identifier: Apache-2.0
#include "fsilab/transient.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "fsilab/errors.hpp"

namespace fsilab {

double Trajectory::initial_decay_metric() const {
    if (steps.empty()) return 0.0;
    const auto& s = steps.front();
    return std::sqrt(s.grad2) + s.chi + s.sigma;
}

double Trajectory::final_decay_metric() const {
    if (steps.empty()) return 0.0;
    const auto& s = steps.back();
    return std::sqrt(s.grad2) + s.chi + s.sigma;
}

Vec OdeSystem::quadratic(const Vec& c) const {
    Vec out = Vec::Zero(N);
    for (int i = 0; i < N; ++i) {
        double s = 0.0;
        for (int k = 0; k < N; ++k) {
            if (c[k] == 0.0) continue;
            const double* row = &Q[(static_cast<size_t>(i) * N + k) * N];
            double inner = 0.0;
            for (int m = 0; m < N; ++m) inner += row[m] * c[m];
            s += c[k] * inner;
        }
        out[i] = s;
    }
    return out;
}

Vec OdeSystem::rhs(const Vec& c, const Vec& chi) const {
    Vec r = L * c - (omega_n2 / varpi) * (Psi_hat.transpose() * chi);
    if (lambda != 0.0) r -= lambda * quadratic(c);
    return r;
}

GalerkinState project_initial_data(const Vec& x0, const Vec& chi0, const ModalBasis& basis, const OperatorSet& ops) {
    if (x0.size() != basis.modes.rows() || ops.M_w.rows() != x0.size())
        throw BasisMismatch("initial data and modal basis live on different spaces");
    if (chi0.size() != basis.rigid.rows()) throw BasisMismatch("chi0 has the wrong dimension");
    GalerkinState g;
    g.c = basis.modes.transpose() * (ops.M_w * x0);
    g.chi = chi0;
    g.sigma = basis.rigid * g.c;
    return g;
}

Vec initial_perturbation(const FsiSpace& s, const OperatorSet& ops, const VectorField& field, const Vec3& chi1) {
    if (!s.has_rigid()) throw PreconditionViolation("initial data need the unpinned space");
    Vec x = Vec::Zero(s.n_red);
    const int d = s.dim;
    for (int n = 0; n < s.n_nodes(); ++n) {
        if (s.free_index[n] < 0) continue;
        Vec3 v = field ? field(s.nodes[n]) : Vec3::Zero();
        for (int k = 0; k < d; ++k) x[s.free_index[n] * d + k] = v[k];
    }
    for (int k = 0; k < d; ++k) x[s.rigid_offset + k] = chi1[k];
    return project_solenoidal(s, ops, x);
}

double data_norm(const OperatorSet& ops, const FsiSpace& s, const Vec& x0, const Vec& chi0) {
    double u2 = x0.dot(ops.M_fluid * x0), g2 = x0.dot(ops.G * x0);
    return std::sqrt(u2 + g2) + chi0.norm() + s.rigid_part(x0).norm();
}

namespace {

SpMat rigid_selector(const FsiSpace& s) {
    // n_red x d, column k picks the k-th rigid component
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < s.dim; ++k) t.emplace_back(s.rigid_offset + k, k, 1.0);
    SpMat J(s.n_red, s.dim);
    J.setFromTriplets(t.begin(), t.end());
    return J;
}

// Linear part of the perturbation forcing on the reduced layout:
// x -> P^T [ d1 u - c(u0; u, .) + ((sigma - u) . grad u0, .) ].
SpMat linear_forcing(const FsiSpace& s, const OperatorSet& ops, const Vec& u0_full) {
    SpMat Pt = s.P.transpose();
    SpMat full = (ops.D1f - advection_matrix(s, u0_full)) * s.P;
    SpMat rel = s.Pc - s.P;
    SpMat react = reaction_matrix(s, u0_full) * rel;
    return Pt * (full + react);
}

}  // namespace

OdeSystem assemble_ode_tensors(const FsiSpace& s, const ModalBasis& basis, const SteadyState& state,
                               const NondimParams& params) {
    params.validate();
    if (!s.has_rigid()) throw PreconditionViolation("the Galerkin system needs the unpinned space");
    const int N = basis.N;
    if (N > 200) throw TensorTooLarge("N = " + std::to_string(N) + " exceeds the dense tensor limit of 200");
    if (basis.modes.rows() != s.n_red) throw BasisMismatch("basis and space differ");
    if (state.u_full.size() != 0 && state.u_full.size() != s.n_full())
        throw BasisMismatch("steady state and space differ");
    const Vec u0 = state.u_full.size() ? state.u_full : Vec::Zero(s.n_full());
    OperatorSet ops = assemble(s, params);

    OdeSystem sys;
    sys.N = N;
    sys.dim = s.dim;
    sys.mu = basis.mu;
    sys.Psi_hat = basis.rigid;
    sys.lambda = params.lambda;
    sys.omega_n2 = params.omega_n2;
    sys.varpi = params.varpi;
    const Mat& Psi = basis.modes;
    sys.grad_gram = Psi.transpose() * (ops.G * Psi);
    sys.L = -Mat(basis.mu.asDiagonal());
    if (params.lambda != 0.0) {
        SpMat Lf = linear_forcing(s, ops, u0);
        sys.L += params.lambda * (Psi.transpose() * (Lf * Psi));
    }
    Mat PPsi = s.P * Psi;
    Mat A = (s.Pc - s.P) * Psi;  // psi_hat_k - psi_k as full fields
    sys.Q.assign(static_cast<size_t>(N) * N * N, 0.0);
    for (int k = 0; k < N; ++k) {
        SpMat Ak = advection_matrix(s, A.col(k));
        Mat Qk = PPsi.transpose() * (Ak * PPsi);  // (i, m)
        for (int i = 0; i < N; ++i)
            for (int m = 0; m < N; ++m) sys.Q[(static_cast<size_t>(i) * N + k) * N + m] = Qk(i, m);
    }
    for (double v : sys.Q)
        if (!std::isfinite(v)) throw PreconditionViolation("non-finite tensor entry");
    return sys;
}

namespace {

StepRecord galerkin_record(const OdeSystem& sys, const Vec& c, const Vec& chi, double t, double dt, int it) {
    StepRecord r;
    r.t = t;
    r.dt = dt;
    Vec sigma = sys.Psi_hat * c;
    r.sigma = sigma.norm();
    r.chi = chi.norm();
    r.u_norm2 = std::max(0.0, c.squaredNorm() - sigma.squaredNorm() / sys.varpi);
    r.grad2 = c.dot(sys.grad_gram * c);
    r.energy = c.squaredNorm() + (sys.omega_n2 / sys.varpi) * chi.squaredNorm();
    r.newton_iters = it;
    return r;
}

}  // namespace

Trajectory integrate_galerkin(const OdeSystem& sys, const GalerkinState& init, double t_end, double dt,
                              const IntegratorOptions& opt) {
    if (!(dt > 0.0)) throw PreconditionViolation("dt must be > 0");
    if (init.c.size() != sys.N || init.chi.size() != sys.dim) throw BasisMismatch("initial state does not fit the system");
    const int N = sys.N;
    const double k_spring = sys.omega_n2 / sys.varpi;
    const Mat HtH = sys.Psi_hat.transpose() * sys.Psi_hat;
    Trajectory tr;
    Vec c = init.c, chi = init.chi;
    double t = init.t;
    tr.steps.push_back(galerkin_record(sys, c, chi, t, 0.0, 0));

    // One backward Euler step of size h; returns false if Newton fails.
    auto step = [&](const Vec& cn, const Vec& chin, double h, Vec& cout, Vec& chiout, int& iters) {
        Vec x = cn;
        const double scale = cn.norm() + h * k_spring * chin.norm();
        for (iters = 0; iters < opt.max_newton; ++iters) {
            Vec chi1 = chin + h * (sys.Psi_hat * x);
            Vec F = x - cn - h * sys.rhs(x, chi1);
            if (F.norm() <= opt.newton_rtol * std::max(scale, 1e-300) || scale == 0.0) {
                cout = x;
                chiout = chi1;
                return true;
            }
            Mat J = Mat::Identity(N, N) - h * sys.L + h * h * k_spring * HtH;
            if (sys.lambda != 0.0) {
                Mat dQ = Mat::Zero(N, N);
                for (int i = 0; i < N; ++i)
                    for (int k = 0; k < N; ++k)
                        for (int m = 0; m < N; ++m) {
                            double q = sys.q(i, k, m);
                            dQ(i, k) += q * x[m];
                            dQ(i, m) += q * x[k];
                        }
                J += h * sys.lambda * dQ;
            }
            Vec dx = J.partialPivLu().solve(-F);
            if (!dx.allFinite()) return false;
            x += dx;
        }
        return false;
    };
    std::function<void(double, int)> advance = [&](double h, int depth) {
        Vec c1, chi1;
        int it = 0;
        if (step(c, chi, h, c1, chi1, it)) {
            c = c1;
            chi = chi1;
            t += h;
            tr.steps.push_back(galerkin_record(sys, c, chi, t, h, it));
            return;
        }
        if (depth >= opt.max_halvings) throw StepperDiverged("Newton failed after " + std::to_string(depth) + " dt halvings");
        tr.dt_halvings = std::max(tr.dt_halvings, depth + 1);
        advance(0.5 * h, depth + 1);
        advance(0.5 * h, depth + 1);
    };
    const long nsteps = std::lround((t_end - init.t) / dt);
    for (long n = 0; n < nsteps; ++n) advance(dt, 0);
    tr.final_x = c;
    tr.final_chi = chi;
    return tr;
}

Trajectory integrate_monolithic(const FsiSpace& s, const OperatorSet& ops, const SteadyState& state,
                                const NondimParams& params, const Vec& x0, const Vec& chi0, double t_end, double dt,
                                const IntegratorOptions& opt) {
    params.validate();
    if (!(dt > 0.0)) throw PreconditionViolation("dt must be > 0");
    if (!s.has_rigid()) throw PreconditionViolation("the monolithic scheme needs the unpinned space");
    if (x0.size() != s.n_red || chi0.size() != s.dim) throw BasisMismatch("initial data do not fit the space");
    const Vec u0 = state.u_full.size() ? state.u_full : Vec::Zero(s.n_full());
    if (u0.size() != s.n_full()) throw BasisMismatch("steady state and space differ");
    const double lam = params.lambda;
    const double k_spring = params.omega_n2 / params.varpi;
    const SpMat J = rigid_selector(s);
    const SpMat JJt = J * SpMat(J.transpose());
    const SpMat Lf = lam != 0.0 ? linear_forcing(s, ops, u0) : SpMat(s.n_red, s.n_red);
    const SpMat Pt = s.P.transpose();
    const SpMat rel = s.Pc - s.P;
    const SpMat Bt = ops.B.transpose();

    auto nonlinear = [&](const Vec& x) -> Vec {
        // P^T [ -c(sigma - u; u, .) ]
        return -(Pt * advection_apply(s, rel * x, s.P * x));
    };
    std::map<double, SaddleSolver> chord;
    auto chord_solver = [&](double h) -> const SaddleSolver& {
        auto it = chord.find(h);
        if (it != chord.end()) return it->second;
        SpMat K = ops.M_w / h + ops.A_visc + (h * k_spring) * JJt;
        if (lam != 0.0) K -= lam * Lf;
        return chord.emplace(h, SaddleSolver(K, ops.B, ops.pmass)).first->second;
    };

    auto record = [&](const Vec& x, const Vec& chi, double t, double h, int it) {
        StepRecord r;
        r.t = t;
        r.dt = h;
        r.u_norm2 = x.dot(ops.M_fluid * x);
        r.grad2 = x.dot(ops.G * x);
        r.sigma = s.rigid_part(x).norm();
        r.chi = chi.norm();
        r.energy = x.dot(ops.M_w * x) + k_spring * chi.squaredNorm();
        r.newton_iters = it;
        return r;
    };

    Trajectory tr;
    Vec x = x0, chi = chi0, p = Vec::Zero(s.n_p);
    double t = 0.0;
    tr.steps.push_back(record(x, chi, t, 0.0, 0));

    auto step = [&](double h, Vec& xo, Vec& chio, Vec& po, int& iters) {
        const Vec Mxn = ops.M_w * x;
        const Vec f = opt.forcing ? opt.forcing(t + h) : Vec::Zero(s.n_red);
        const double scale = Mxn.norm() / h + k_spring * chi.norm() + f.norm();
        Vec y = x, q = p;
        auto residual = [&](const Vec& yy, const Vec& qq) {
            Vec chi1 = chi + h * s.rigid_part(yy);
            Vec r = (ops.M_w * yy - Mxn) / h + ops.A_visc * yy + Bt * qq + k_spring * (J * chi1) - f;
            if (lam != 0.0) r -= lam * (Lf * yy + nonlinear(yy));
            return r;
        };
        bool full = false;
        double prev = std::numeric_limits<double>::infinity();
        for (iters = 0; iters < opt.max_newton; ++iters) {
            Vec r = residual(y, q);
            Vec g = ops.B * y;
            double rn = std::sqrt(r.squaredNorm() + g.squaredNorm());
            if (!std::isfinite(rn)) return false;
            if (rn <= opt.newton_rtol * scale || scale == 0.0) {
                xo = y;
                chio = chi + h * s.rigid_part(y);
                po = q;
                return true;
            }
            // switch to full Newton when the chord iteration stalls
            if (!full && iters >= 3 && rn > 0.5 * prev) full = true;
            prev = rn;
            Vec dy, dq;
            try {
                if (!full || lam == 0.0) {
                    chord_solver(h).solve(-r, -g, dy, &dq);
                } else {
                    Vec uf = s.P * y;
                    SpMat Jn = -(Pt * (transport_matrix(s, uf) * rel + advection_matrix(s, rel * y) * s.P));
                    SpMat K = ops.M_w / h + ops.A_visc + (h * k_spring) * JJt - lam * (Lf + Jn);
                    SaddleSolver(K, ops.B, ops.pmass).solve(-r, -g, dy, &dq);
                }
            } catch (const SaddleSolveFailure&) {
                return false;
            }
            y += dy;
            q += dq;
        }
        return false;
    };
    std::function<void(double, int)> advance = [&](double h, int depth) {
        Vec x1, chi1, p1;
        int it = 0;
        if (step(h, x1, chi1, p1, it)) {
            x = x1;
            chi = chi1;
            p = p1;
            t += h;
            tr.steps.push_back(record(x, chi, t, h, it));
            if (opt.observer) opt.observer(t, x, chi);
            return;
        }
        if (depth >= opt.max_halvings) throw StepperDiverged("Newton failed after " + std::to_string(depth) + " dt halvings");
        tr.dt_halvings = std::max(tr.dt_halvings, depth + 1);
        advance(0.5 * h, depth + 1);
        advance(0.5 * h, depth + 1);
    };
    const long nsteps = std::lround(t_end / dt);
    for (long n = 0; n < nsteps; ++n) advance(dt, 0);
    tr.final_x = x;
    tr.final_chi = chi;
    return tr;
}

bool tail_oscillates(const Trajectory& traj) {
    if (traj.steps.size() < 3) return false;
    const double T = traj.steps.back().t, t0 = traj.steps.front().t;
    const double half = t0 + 0.5 * (T - t0);
    double running_min = std::numeric_limits<double>::infinity();
    for (const auto& s : traj.steps) {
        if (s.t < half) continue;
        running_min = std::min(running_min, s.energy);
        if (s.energy > 1.01 * running_min && running_min > 0.0) return true;
    }
    return false;
}

EnergyReport energy_monitor(const Trajectory& traj, const ThresholdResult& l2, const NondimParams& params,
                            double decay_factor) {
    EnergyReport rep;
    const double lam = params.lambda;
    rep.gamma = l2.infinite ? 1.0 : 1.0 - lam * l2.theta;
    rep.applicable = rep.gamma > 0.0;
    if (traj.steps.empty()) return rep;
    const double E0 = traj.steps.front().energy;
    // without a positive gamma the estimate degenerates; check plain energy decay instead
    const double g = std::max(rep.gamma, 0.0);
    rep.max_excess = -std::numeric_limits<double>::infinity();
    for (size_t n = 1; n < traj.steps.size(); ++n) {
        const auto& a = traj.steps[n - 1];
        const auto& b = traj.steps[n];
        const double tol = 1e-10 * E0 / b.dt;
        rep.eps_tol = std::max(rep.eps_tol, tol);
        const double lhs = 0.5 * (b.energy - a.energy) / b.dt + g * b.grad2;
        rep.max_excess = std::max(rep.max_excess, lhs - tol);
        if (lhs > tol) ++rep.violations;
        if (b.energy - a.energy > 1e-10 * E0) ++rep.growth_steps;
        rep.dissipation += b.grad2 * b.dt;
    }
    if (traj.steps.size() == 1) rep.max_excess = 0.0;
    rep.initial_metric = traj.initial_decay_metric();
    rep.final_metric = traj.final_decay_metric();
    rep.tail_oscillation = tail_oscillates(traj);
    const bool decayed = rep.final_metric <= decay_factor * rep.initial_metric;
    rep.pass = rep.applicable && rep.violations == 0 && decayed && !rep.tail_oscillation;
    return rep;
}

GronwallBound gronwall_bound(double a_sup, double b_sup, double alpha) {
    if (!(a_sup >= 0.0) || !(b_sup >= 0.0) || !std::isfinite(a_sup) || !std::isfinite(b_sup))
        throw PreconditionViolation("a_sup and b_sup must be finite and nonnegative");
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw PreconditionViolation("alpha must be >= 1");
    GronwallBound g;
    g.M = 3.0 * std::max({1.0, 2.0 * a_sup, 2.0 * b_sup});
    const double M = g.M;
    auto f = [&](double d) { return 2.0 + M * d + std::pow(M * d, alpha) - 3.0 * M; };
    double lo = 0.0, hi = 1.0;
    while (f(hi) < 0.0) hi *= 2.0;
    for (int i = 0; i < 400 && hi - lo > 0.0; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (f(mid) < 0.0) lo = mid;
        else hi = mid;
    }
    g.delta_max = lo;
    return g;
}

double smallness_epsilon(double delta, double gamma, const NondimParams& params) {
    if (!(delta > 0.0) || !(gamma > 0.0)) return 0.0;
    const double w = std::min(1.0, params.varpi / (1.0 + params.omega_n2));
    return std::sqrt(std::min(delta, gamma * delta * delta * w));
}

}  // namespace fsilab
