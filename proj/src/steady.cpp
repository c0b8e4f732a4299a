// SPDX-License-Identifier: Apache-2.0
#include "fsilab/steady.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fsilab/errors.hpp"
#include "fsilab/io.hpp"
#include "fsilab/linalg.hpp"

namespace fsilab {

namespace {

Vec lift_of(const FsiSpace& s, const SteadyOptions& opt) {
    VectorField body = opt.body_value ? opt.body_value : VectorField([](const Vec3&) { return Vec3(1, 0, 0); });
    return s.dirichlet_lift(body, opt.outer_value);
}

}  // namespace

Vec steady_momentum_residual(const FsiSpace& s, const OperatorSet& ops, double lambda, const Vec& u_full,
                             const Vec& p, const Vec& forcing_load) {
    Vec r = ops.Af * u_full + SpMat(ops.Bf.transpose()) * p;
    if (lambda != 0.0) r -= lambda * (ops.D1f * u_full - advection_apply(s, u_full, u_full));
    if (forcing_load.size() == r.size()) r -= forcing_load;
    return r;
}

SteadyState solve_steady(const FsiSpace& s, const OperatorSet& ops, const NondimParams& params,
                         const SteadyState* init, const SteadyOptions& opt) {
    params.validate();
    if (!s.pinned) throw PreconditionViolation("the steady problem lives on the pinned space");
    const double lambda = params.lambda;
    const Vec g = lift_of(s, opt);
    const Vec F = opt.forcing ? load_vector(s, opt.forcing) : Vec();
    const SpMat Pt = s.P.transpose();
    Vec x = Vec::Zero(s.n_red), p = Vec::Zero(s.n_p);
    if (init) {
        if (init->u.size() != s.n_red || init->p.size() != s.n_p)
            throw PreconditionViolation("initial state comes from an incompatible space");
        x = init->u;
        p = init->p;
    }
    auto residual = [&](const Vec& xv, const Vec& pv, Vec& ru, Vec& rp) {
        Vec uf = s.P * xv + g;
        ru = Pt * steady_momentum_residual(s, ops, lambda, uf, pv, F);
        rp = ops.Bf * uf;
        return std::sqrt(ru.squaredNorm() + rp.squaredNorm());
    };
    Vec ru, rp;
    double res = residual(x, p, ru, rp);
    int it = 0;
    while (res > opt.tol) {
        if (it >= opt.max_iter) throw NewtonDiverged("iteration limit reached", x, res);
        Vec uf = s.P * x + g;
        SpMat J = ops.A_visc;
        if (lambda != 0.0) {
            SpMat Jf = ops.D1f - advection_matrix(s, uf) - transport_matrix(s, uf);
            J = J - lambda * reduce(s, Jf);
        }
        Vec dx, dp;
        try {
            SaddleSolver solver(J, ops.B, ops.pmass);
            solver.solve(-ru, -rp, dx, &dp);
        } catch (const SaddleSolveFailure& e) {
            throw LinearSolveFailure(e.what());
        }
        double alpha = 1.0;
        bool accepted = false;
        for (int hv = 0; hv <= opt.max_halvings; ++hv) {
            Vec xn = x + alpha * dx, pn = p + alpha * dp;
            Vec run, rpn;
            double rn = residual(xn, pn, run, rpn);
            if (std::isfinite(rn) && (rn < res || rn <= opt.tol)) {
                x = xn;
                p = pn;
                ru = run;
                rp = rpn;
                res = rn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        ++it;
        if (!accepted) throw NewtonDiverged("line search failed", x, res);
    }
    SteadyState st;
    st.lambda = lambda;
    st.u = x;
    st.u_full = s.P * x + g;
    st.p = p;
    st.residual = res;
    st.iterations = it;
    st.R = s.mesh.R;
    st.h = s.mesh.h;
    st.traction = body_functional(s, steady_momentum_residual(s, ops, lambda, st.u_full, p, F));
    st.chi = spring_elongation(st, params);
    return st;
}

SteadyState solve_steady(const FsiSpace& s, const NondimParams& params, const SteadyState* init,
                         const SteadyOptions& opt) {
    OperatorSet ops = assemble(s, params);
    return solve_steady(s, ops, params, init, opt);
}

Vec spring_elongation(const SteadyState& state, const NondimParams& params) {
    return -(params.varpi / params.omega_n2) * state.traction;
}

Branch continuation_sweep(const FsiSpace& s, const OperatorSet& ops, const NondimParams& params,
                          const std::vector<double>& grid, const ContinuationOptions& opt) {
    for (size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw PreconditionViolation("lambda grid must be strictly increasing");
    Branch br;
    std::vector<double> trace;
    auto solve_at = [&](double lam, const SteadyState* init) {
        NondimParams p = params;
        p.lambda = lam;
        return solve_steady(s, ops, p, init, opt.newton);
    };
    std::function<SteadyState(const SteadyState*, double, int, bool&)> reach =
        [&](const SteadyState* from, double target, int depth, bool& bisected) -> SteadyState {
        try {
            return solve_at(target, from);
        } catch (const NewtonDiverged&) {
            const double lo = from ? from->lambda : 0.0;
            trace.push_back(target);
            if (depth >= opt.max_bisections || !from)
                throw ContinuationStalled("Newton failed at lambda = " + std::to_string(target), lo, trace);
            bisected = true;
            SteadyState mid = reach(from, 0.5 * (lo + target), depth + 1, bisected);
            return reach(&mid, target, depth + 1, bisected);
        }
    };
    for (double lam : grid) {
        bool bis = false;
        const SteadyState* prev = br.states.empty() ? nullptr : &br.states.back();
        SteadyState st = reach(prev, lam, 0, bis);
        br.iterations.push_back(st.iterations);
        br.bisected.push_back(bis);
        br.states.push_back(std::move(st));
        if (opt.on_state) opt.on_state(br.states.back(), bis);
    }
    return br;
}

Extrapolation extrapolate_in_radius(const std::vector<double>& R, const std::vector<double>& d,
                                    std::optional<double> fixed_q) {
    if (R.size() != d.size() || R.size() < 2) throw PreconditionViolation("need at least two radii");
    const size_t n = R.size();
    Extrapolation e;
    if (n == 2 || fixed_q) {
        double q = fixed_q.value_or(1.0);
        double r1 = std::pow(R[n - 2], -q), r2 = std::pow(R[n - 1], -q);
        double dd = d[n - 2] - d[n - 1];
        if (dd == 0.0 || r1 == r2) throw IllConditionedFit("diagnostics do not change with R");
        e.q = q;
        e.coefficient = dd / (r1 - r2);
        e.value = d[n - 1] - e.coefficient * r2;
        return e;
    }
    const double R1 = R[n - 3], R2 = R[n - 2], R3 = R[n - 1];
    const double d1 = d[n - 3], d2 = d[n - 2], d3 = d[n - 1];
    const double a = d1 - d2, b = d2 - d3;
    if (a == 0.0 || b == 0.0 || (a > 0) != (b > 0)) throw IllConditionedFit("diagnostics are not monotone in R");
    const double ratio = a / b;
    auto f = [&](double q) {
        return (std::pow(R1, -q) - std::pow(R2, -q)) / (std::pow(R2, -q) - std::pow(R3, -q)) - ratio;
    };
    double lo = 1e-6, hi = 40.0;
    if (f(lo) * f(hi) > 0) throw IllConditionedFit("no algebraic decay rate fits the data");
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if ((f(mid) > 0) == (f(lo) > 0)) lo = mid;
        else hi = mid;
    }
    e.q = 0.5 * (lo + hi);
    e.coefficient = b / (std::pow(R2, -e.q) - std::pow(R3, -e.q));
    e.value = d3 - e.coefficient * std::pow(R3, -e.q);
    return e;
}

RadiusExtrapolation extrapolate_in_radius(const std::vector<SteadyState>& states, std::optional<double> fixed_q) {
    std::vector<double> R, drag, chi;
    for (const auto& s : states) {
        R.push_back(s.R);
        drag.push_back(s.drag());
        chi.push_back(s.chi.norm());
    }
    RadiusExtrapolation r;
    r.drag = extrapolate_in_radius(R, drag, fixed_q);
    r.chi_norm = extrapolate_in_radius(R, chi, fixed_q);
    return r;
}

void save_branch(const Branch& branch, const std::string& dir, const NondimParams& params) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::ordered_json man;
    man["format"] = "fsilab-branch-1";
    man["omega_n2"] = params.omega_n2;
    man["varpi"] = params.varpi;
    man["states"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < branch.states.size(); ++i) {
        const auto& s = branch.states[i];
        char name[32];
        std::snprintf(name, sizeof name, "state_%04zu.bin", i);
        std::string path = (fs::path(dir) / name).string();
        write_binary_vectors(path, {s.u, s.u_full, s.p, s.chi, s.traction});
        nlohmann::ordered_json e;
        e["lambda"] = s.lambda;
        e["R"] = s.R;
        e["h"] = s.h;
        e["residual"] = s.residual;
        e["newton_iters"] = i < branch.iterations.size() ? branch.iterations[i] : s.iterations;
        e["bisected"] = i < branch.bisected.size() ? static_cast<bool>(branch.bisected[i]) : false;
        e["chi0"] = std::vector<double>(s.chi.data(), s.chi.data() + s.chi.size());
        e["drag"] = s.drag();
        e["lift"] = s.lift();
        e["file"] = name;
        e["sha256"] = sha256_file(path);
        man["states"].push_back(e);
    }
    std::ofstream os((fs::path(dir) / "manifest.json").string());
    os << man.dump(2) << '\n';
}

Branch load_branch(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path mp = fs::path(dir) / "manifest.json";
    if (!fs::exists(mp)) throw PreconditionViolation("branch directory " + dir + " has no manifest.json");
    std::ifstream in(mp.string());
    nlohmann::json man = nlohmann::json::parse(in);
    Branch br;
    for (const auto& e : man.at("states")) {
        std::string path = (fs::path(dir) / e.at("file").get<std::string>()).string();
        if (sha256_file(path) != e.at("sha256").get<std::string>())
            throw PreconditionViolation("checksum mismatch for " + path);
        auto blocks = read_binary_vectors(path);
        if (blocks.size() != 5) throw PreconditionViolation("unexpected block count in " + path);
        SteadyState s;
        s.u = blocks[0];
        s.u_full = blocks[1];
        s.p = blocks[2];
        s.chi = blocks[3];
        s.traction = blocks[4];
        s.lambda = e.at("lambda").get<double>();
        s.R = e.at("R").get<double>();
        s.h = e.at("h").get<double>();
        s.residual = e.at("residual").get<double>();
        s.iterations = e.at("newton_iters").get<int>();
        br.iterations.push_back(s.iterations);
        br.bisected.push_back(e.at("bisected").get<bool>());
        br.states.push_back(std::move(s));
    }
    return br;
}

}  // namespace fsilab
