// SPDX-License-Identifier: Apache-2.0
#include "fsilab/cli.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "fsilab/bifurcation.hpp"
#include "fsilab/errors.hpp"
#include "fsilab/geometry.hpp"
#include "fsilab/io.hpp"
#include "fsilab/modal.hpp"
#include "fsilab/operators.hpp"
#include "fsilab/steady.hpp"
#include "fsilab/thresholds.hpp"
#include "fsilab/transient.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace fsilab {

namespace {

constexpr const char* kArtifactVersion = "fsilab 0.1.0";

/// Thrown when a computed table violates lambda2 <= lambda1; maps to exit code 4.
class OrderingViolation : public Error {
public:
    explicit OrderingViolation(const std::string& w) : Error("OrderingViolation: " + w) {}
};

using Clock = std::chrono::steady_clock;

class Manifest {
public:
    Manifest(const RunConfig& c, std::string command) : out_(c.out_dir), command_(std::move(command)) {
        doc_["command"] = command_;
        doc_["artifact_version"] = kArtifactVersion;
        doc_["config_sha256"] = sha256_string(c.text);
        doc_["seed"] = c.seed;
        doc_["jobs"] = c.jobs;
        doc_["status"] = "running";
        doc_["timings_s"] = ojson::object();
        doc_["monitors"] = ojson::object();
        doc_["summary"] = ojson::object();
        doc_["files"] = ojson::array();
    }
    void stage(const std::string& name, Clock::time_point start) {
        doc_["timings_s"][name] = std::chrono::duration<double>(Clock::now() - start).count();
    }
    void monitor(const std::string& name, bool pass) { doc_["monitors"][name] = pass; }
    ojson& summary() { return doc_["summary"]; }
    void file(const std::string& rel) {
        files_.push_back(rel);
    }
    void write(const std::string& status) {
        doc_["status"] = status;
        for (const auto& f : files_) {
            fs::path p = fs::path(out_) / f;
            if (!fs::exists(p)) continue;
            doc_["files"].push_back({{"path", f}, {"sha256", sha256_file(p.string())}});
        }
        std::ofstream os(fs::path(out_) / manifest_name(command_));
        os << doc_.dump(2) << "\n";
    }

private:
    std::string out_, command_;
    ojson doc_;
    std::vector<std::string> files_;
};

std::string brief(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8g", v);
    return buf;
}

std::string path_in(const RunConfig& c, const std::string& rel) { return (fs::path(c.out_dir) / rel).string(); }

void warn_plot(bool ok, const std::string& what, std::ostream& out) {
    if (!ok) out << "warning: could not write plot " << what << "\n";
}

bool try_plot(const std::string& path, const std::string& title, const std::string& xl, const std::string& yl,
              const std::vector<SvgSeries>& series, bool log_y, std::ostream& out) {
    bool ok = false;
    try {
        ok = write_svg_plot(path, title, xl, yl, series, log_y);
    } catch (const std::exception& e) {
        out << "warning: " << e.what() << "\n";
    }
    warn_plot(ok, path, out);
    return ok;
}

BodyShape make_body(const MeshConfig& m) {
    if (m.body == "disk") {
        if (!m.semi_axes.empty()) throw ConfigError("mesh.semi_axes is not used for a disk");
        return BodyShape::disk();
    }
    if (m.body == "sphere") {
        if (!m.semi_axes.empty()) throw ConfigError("mesh.semi_axes is not used for a sphere");
        return BodyShape::sphere();
    }
    if (m.body == "ellipse") return BodyShape::ellipse(m.semi_axes[0], m.semi_axes[1]);
    if (m.body == "ellipsoid") return BodyShape::ellipsoid(m.semi_axes[0], m.semi_axes[1], m.semi_axes[2]);
    if (!fs::exists(m.poly_file)) throw ConfigError("mesh.poly_file '" + m.poly_file + "' does not exist");
    return BodyShape::poly_file(m.poly_file);
}

Mesh make_mesh(const RunConfig& c) {
    const auto& m = c.mesh;
    Mesh mesh;
    if (!m.input_vtk.empty()) {
        if (!fs::exists(m.input_vtk)) throw ConfigError("mesh.input_vtk '" + m.input_vtk + "' does not exist");
        mesh = read_vtk(m.input_vtk, make_body(m));
    } else {
        mesh = build_annulus_mesh(make_body(m), m.R, m.h, m.symmetric);
    }
    for (int i = 0; i < m.refinements; ++i) mesh = refine(mesh);
    validate_mesh(mesh);
    return mesh;
}

ElementFamily family(const MeshConfig& m) {
    if (m.element == "scott_vogelius") return ElementFamily::ScottVogelius;
    if (m.element == "taylor_hood") return ElementFamily::TaylorHood;
    return ElementFamily::Auto;
}

EigMethod eig_method(const std::string& s) {
    if (s == "dense") return EigMethod::Dense;
    if (s == "iterative") return EigMethod::Iterative;
    return EigMethod::Auto;
}

// Pinned and unpinned spaces with their operators, built on demand.
struct Problem {
    Mesh mesh;
    std::optional<FsiSpace> pinned, unpinned;
    std::optional<OperatorSet> ops_p, ops_u;
    NondimParams params;

    Problem(const RunConfig& c) : mesh(make_mesh(c)), params(c.params), cfg(c) {}
    const FsiSpace& P() {
        if (!pinned) pinned = build_fsi_space(mesh, cfg.mesh.p_v, true, family(cfg.mesh));
        return *pinned;
    }
    const OperatorSet& OP() {
        if (!ops_p) ops_p = assemble(P(), params);
        return *ops_p;
    }
    const FsiSpace& U() {
        if (!unpinned) unpinned = build_fsi_space(mesh, cfg.mesh.p_v, false, family(cfg.mesh));
        return *unpinned;
    }
    const OperatorSet& OU() {
        if (!ops_u) ops_u = assemble(U(), params);
        return *ops_u;
    }
    const RunConfig& cfg;
};

SteadyOptions newton_options(const RunConfig& c) {
    SteadyOptions o;
    o.tol = c.sweep.newton_tol;
    o.max_iter = c.sweep.max_iter;
    return o;
}

// Runs f(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure by index.
void parallel_for(int n, int jobs, const std::function<void(int)>& f) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::mutex mtx;
    int next = 0;
    auto worker = [&]() {
        for (;;) {
            int i;
            {
                std::lock_guard<std::mutex> lock(mtx);
                if (next >= n) return;
                i = next++;
            }
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<VtkPointField> velocity_field(const FsiSpace& s, const Vec& full, const std::string& name) {
    VtkPointField f;
    f.name = name;
    f.components = 3;
    const int nv = static_cast<int>(s.comp.vertices.size());
    f.values.reserve(static_cast<size_t>(nv) * 3);
    for (int v = 0; v < nv; ++v)
        for (int k = 0; k < 3; ++k) f.values.push_back(k < s.dim ? full[v * s.dim + k] : 0.0);
    return {f};
}

std::vector<std::string> axis_names(int dim, const std::string& prefix) {
    std::vector<std::string> out;
    for (int k = 0; k < dim; ++k) out.push_back(prefix + "_" + std::to_string(k + 1));
    return out;
}

Branch load_branch_checked(const std::string& dir, const FsiSpace& pinned) {
    if (dir.empty()) throw ConfigError("no branch directory given");
    if (!fs::is_directory(dir) || !fs::exists(fs::path(dir) / "manifest.json"))
        throw ConfigError("branch directory '" + dir + "' is missing or has no manifest.json");
    Branch br = load_branch(dir);
    for (const auto& s : br.states)
        if (s.u_full.size() != pinned.n_full() || s.u.size() != pinned.n_red)
            throw ConfigError("branch '" + dir + "' was computed on a different mesh");
    if (br.states.empty()) throw ConfigError("branch '" + dir + "' holds no states");
    return br;
}

std::string branch_dir(const RunConfig& c, const std::string& configured) {
    return configured.empty() ? path_in(c, "branch") : configured;
}

}  // namespace

std::string manifest_name(const std::string& command) { return "manifest_" + command + ".json"; }

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"mesh", "steady", "thresholds", "modes", "transient", "bifurcate"};
    return names;
}

std::vector<std::string> verify_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read manifest '" + path + "'");
    ojson doc = ojson::parse(in);
    std::vector<std::string> bad;
    const fs::path base = fs::path(path).parent_path();
    for (const auto& f : doc.at("files")) {
        const std::string rel = f.at("path").get<std::string>();
        fs::path p = base / rel;
        if (!fs::exists(p) || sha256_file(p.string()) != f.at("sha256").get<std::string>()) bad.push_back(rel);
    }
    return bad;
}

// ---------------------------------------------------------------- mesh

int cmd_mesh(const RunConfig& c, std::ostream& out) {
    Manifest man(c, "mesh");
    auto t0 = Clock::now();
    Problem pb(c);
    const Mesh& mesh = pb.mesh;
    MeshCheck chk = check_mesh(mesh);
    man.stage("mesh", t0);
    write_vtk(mesh, path_in(c, "mesh.vtk"));
    man.file("mesh.vtk");

    CsvWriter csv({"dim", "vertices", "cells", "body_facets", "outer_facets", "R", "h", "min_volume",
                   "body_measure", "exact_body_measure", "max_body_offset", "max_outer_offset"});
    const double exact = mesh.body ? mesh.body->boundary_measure() : 0.0;
    csv.row({mesh.dim, static_cast<int>(mesh.vertices.size()), static_cast<int>(mesh.cells.size()),
             mesh.count_facets(FacetTag::Body), mesh.count_facets(FacetTag::Outer), mesh.R, mesh.h, chk.min_volume,
             mesh.tagged_measure(FacetTag::Body), exact, chk.max_body_offset, chk.max_outer_offset});
    csv.write(path_in(c, "mesh.csv"));
    man.file("mesh.csv");
    man.monitor("mesh_valid", chk.ok);
    man.summary()["vertices"] = mesh.vertices.size();
    man.summary()["cells"] = mesh.cells.size();

    if (c.export_operators) {
        auto t1 = Clock::now();
        const FsiSpace& s = pb.P();
        const OperatorSet& ops = pb.OP();
        const std::vector<std::pair<std::string, const SpMat*>> mats = {
            {"M_w", &ops.M_w}, {"A_visc", &ops.A_visc}, {"G", &ops.G}, {"D1", &ops.D1}, {"B", &ops.B}};
        for (const auto& [name, m] : mats) {
            write_coo(*m, path_in(c, name + ".coo"));
            man.file(name + ".coo");
        }
        man.summary()["reduced_dofs"] = s.n_red;
        man.summary()["pressure_dofs"] = s.n_p;
        man.stage("operators", t1);
    }
    out << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.cells.size() << " cells\n";
    man.write(chk.ok ? "ok" : "failed");
    return chk.ok ? kExitOk : kExitSolver;
}

// ---------------------------------------------------------------- steady

int cmd_steady(const RunConfig& c, std::ostream& out) {
    Manifest man(c, "steady");
    auto t0 = Clock::now();
    Problem pb(c);
    const FsiSpace& s = pb.P();
    const OperatorSet& ops = pb.OP();
    man.stage("assemble", t0);

    std::vector<double> grid = c.sweep.lambdas;
    std::sort(grid.begin(), grid.end());
    if (std::adjacent_find(grid.begin(), grid.end()) != grid.end())
        throw ConfigError("sweep.lambda contains duplicate values");

    Branch partial;
    ContinuationOptions co;
    co.max_bisections = c.sweep.max_bisections;
    co.newton = newton_options(c);
    co.on_state = [&](const SteadyState& st, bool bis) {
        partial.states.push_back(st);
        partial.iterations.push_back(st.iterations);
        partial.bisected.push_back(bis);
        out << "steady: lambda = " << brief(st.lambda) << " residual = " << brief(st.residual)
            << "\n";
    };
    std::string failure;
    auto t1 = Clock::now();
    try {
        continuation_sweep(s, ops, pb.params, grid, co);
    } catch (const ContinuationStalled& e) {
        failure = e.what();
    }
    man.stage("sweep", t1);

    if (!partial.states.empty()) {
        save_branch(partial, path_in(c, "branch"), pb.params);
        man.file("branch/manifest.json");
        for (size_t i = 0; i < partial.states.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "branch/state_%04zu.bin", i);
            man.file(name);
        }
    }
    std::vector<std::string> header = {"lambda", "residual", "newton_iters", "bisected", "drag", "lift"};
    for (auto& n : axis_names(s.dim, "chi")) header.push_back(n);
    CsvWriter csv(header);
    SvgSeries drag{"drag", {}, {}};
    for (size_t i = 0; i < partial.states.size(); ++i) {
        const auto& st = partial.states[i];
        std::vector<CsvValue> row = {st.lambda, st.residual, st.iterations, partial.bisected[i] ? 1 : 0, st.drag(),
                                     st.lift()};
        for (int k = 0; k < s.dim; ++k) row.emplace_back(st.chi[k]);
        csv.row(row);
        drag.x.push_back(st.lambda);
        drag.y.push_back(st.drag());
    }
    csv.write(path_in(c, "steady.csv"));
    man.file("steady.csv");
    if (c.sweep.write_fields && !partial.states.empty()) {
        write_vtk_fields(s.comp, velocity_field(s, partial.states.back().u_full, "velocity"),
                         path_in(c, "steady_last.vtk"));
        man.file("steady_last.vtk");
    }
    if (c.plots && try_plot(path_in(c, "drag.svg"), "Drag along the branch", "lambda", "drag", {drag}, false, out))
        man.file("drag.svg");
    man.monitor("all_converged", failure.empty());
    man.summary()["states"] = partial.states.size();
    if (!failure.empty()) {
        man.summary()["failure"] = failure;
        man.write("solver_failure");
        out << failure << "\n";
        return kExitSolver;
    }
    man.write("ok");
    return kExitOk;
}

// ---------------------------------------------------------------- thresholds

int cmd_thresholds(const RunConfig& c, std::ostream& out) {
    Manifest man(c, "thresholds");
    auto t0 = Clock::now();
    Problem pb(c);
    const FsiSpace& sp = pb.P();
    const FsiSpace& su = pb.U();
    const OperatorSet& op = pb.OP();
    const OperatorSet& ou = pb.OU();
    man.stage("assemble", t0);

    Branch br;
    if (c.thresholds.source == "branch") {
        br = load_branch_checked(branch_dir(c, c.thresholds.branch), sp);
    } else {
        for (double l : c.sweep.lambdas) {
            SteadyState z;
            z.lambda = l;
            z.u = Vec::Zero(sp.n_red);
            z.u_full = Vec::Zero(sp.n_full());
            z.p = Vec::Zero(sp.n_p);
            z.chi = Vec::Zero(sp.dim);
            z.traction = Vec::Zero(sp.dim);
            br.states.push_back(z);
        }
    }
    ThresholdOptions to;
    to.method = eig_method(c.thresholds.method);
    to.dense_limit = c.thresholds.dense_limit;
    to.tol = c.thresholds.tol;
    to.state_tol = c.thresholds.state_tol;
    to.seed = c.seed;

    const int n = static_cast<int>(br.states.size());
    std::vector<ThresholdResult> r1(n), r2(n);
    auto t1 = Clock::now();
    parallel_for(n, c.jobs, [&](int i) {
        r1[i] = lambda1(br.states[i], sp, op, to);
        r2[i] = lambda2(br.states[i], su, ou, to);
    });
    man.stage("thresholds", t1);

    // ordering check before anything is written
    for (int i = 0; i < n; ++i) {
        const double l1 = r1[i].value(), l2 = r2[i].value();
        if (std::isnan(l1) || std::isnan(l2)) throw NaNOutput("threshold is NaN");
        if (l2 - l1 > 1e-10 * std::max(1.0, std::isinf(l1) ? 1.0 : l1))
            throw OrderingViolation("lambda2 = " + format_number(l2) + " exceeds lambda1 = " + format_number(l1) +
                                    " at lambda = " + format_number(br.states[i].lambda));
    }
    CsvWriter csv({"lambda", "lambda1", "lambda2", "gamma", "theta1", "theta2", "raw_mismatch1", "raw_mismatch2",
                   "eig_residual1", "eig_residual2"});
    SvgSeries s1{"lambda1", {}, {}}, s2{"lambda2", {}, {}};
    bool raw_ok = true;
    for (int i = 0; i < n; ++i) {
        const double l = br.states[i].lambda;
        const double gamma = 1.0 - l * r2[i].theta;
        csv.row({l, r1[i].value(), r2[i].value(), gamma, r1[i].theta, r2[i].theta, r1[i].raw_mismatch(),
                 r2[i].raw_mismatch(), r1[i].eig_residual, r2[i].eig_residual});
        s1.x.push_back(l);
        s1.y.push_back(r1[i].value());
        s2.x.push_back(l);
        s2.y.push_back(r2[i].value());
        if (!r1[i].infinite && r1[i].raw_mismatch() > 1e-8) raw_ok = false;
        if (!r2[i].infinite && r2[i].raw_mismatch() > 1e-8) raw_ok = false;
        out << "thresholds: lambda = " << brief(l) << " lambda1 = " << brief(r1[i].value())
            << " lambda2 = " << brief(r2[i].value()) << "\n";
    }
    csv.write(path_in(c, "thresholds.csv"));
    man.file("thresholds.csv");
    man.monitor("ordering", true);
    man.monitor("raw_quotient", raw_ok);

    if (c.thresholds.lambda_tilde && c.thresholds.source == "branch") {
        auto t2 = Clock::now();
        auto lt = find_lambda_tilde(br, sp, op, pb.params, to, c.thresholds.tilde_tol);
        if (lt) {
            man.summary()["lambda_tilde"] = lt->lambda;
            man.summary()["lambda_tilde_bracket"] = {lt->lo, lt->hi};
        } else {
            man.summary()["lambda_tilde"] = "not bracketed";
        }
        man.stage("lambda_tilde", t2);
    }
    if (c.plots && try_plot(path_in(c, "thresholds.svg"), "Thresholds", "lambda", "threshold", {s1, s2}, false, out))
        man.file("thresholds.svg");
    man.write("ok");
    return kExitOk;
}

// ---------------------------------------------------------------- modes

int cmd_modes(const RunConfig& c, std::ostream& out) {
    Manifest man(c, "modes");
    auto t0 = Clock::now();
    Problem pb(c);
    const FsiSpace& su = pb.U();
    const OperatorSet& ou = pb.OU();
    man.stage("assemble", t0);
    auto t1 = Clock::now();
    ModalBasis basis = stokes_fsi_modes(su, ou, c.modes.N, eig_method(c.modes.method));
    ModeReport rep = verify_modes(basis, ou, c.modes.gram_tol);
    man.stage("modes", t1);

    std::vector<std::string> header = {"index", "mu", "coupling_residual"};
    for (auto& h : axis_names(su.dim, "rigid")) header.push_back(h);
    CsvWriter csv(header);
    SvgSeries ser{"mu", {}, {}};
    double max_coupling = 0.0;
    for (int i = 0; i < basis.N; ++i) {
        std::vector<CsvValue> row = {i + 1, basis.mu[i], basis.coupling_residual[i]};
        for (int k = 0; k < su.dim; ++k) row.emplace_back(basis.rigid(k, i));
        csv.row(row);
        ser.x.push_back(i + 1);
        ser.y.push_back(basis.mu[i]);
        max_coupling = std::max(max_coupling, basis.coupling_residual[i]);
    }
    csv.write(path_in(c, "modes.csv"));
    man.file("modes.csv");
    if (c.modes.write_fields) {
        std::vector<VtkPointField> fields;
        for (int i = 0; i < basis.N; ++i) {
            auto f = velocity_field(su, su.P * basis.modes.col(i), "mode_" + std::to_string(i + 1));
            fields.push_back(f[0]);
        }
        write_vtk_fields(su.comp, fields, path_in(c, "modes.vtk"));
        man.file("modes.vtk");
    }
    if (c.plots && try_plot(path_in(c, "modes.svg"), "Modified Stokes eigenvalues", "index", "mu", {ser}, true, out))
        man.file("modes.svg");
    const bool gram_ok = basis.gram_residual < c.modes.gram_tol;
    const bool coupling_ok = max_coupling < c.modes.coupling_tol;
    man.monitor("gram", gram_ok);
    man.monitor("rigid_coupling", coupling_ok);
    man.monitor("verify", rep.pass);
    man.summary()["gram_residual"] = basis.gram_residual;
    man.summary()["max_coupling_residual"] = max_coupling;
    man.summary()["cluster_warning"] = basis.cluster_warning;
    out << "modes: N = " << basis.N << " gram residual = " << brief(basis.gram_residual) << "\n";
    man.write("ok");
    return kExitOk;
}

// ---------------------------------------------------------------- transient

int cmd_transient(const RunConfig& c, std::ostream& out) {
    const auto& tc = c.transient;
    Manifest man(c, "transient");
    auto t0 = Clock::now();
    Problem pb(c);
    const FsiSpace& sp = pb.P();
    const FsiSpace& su = pb.U();
    const OperatorSet& op = pb.OP();
    const OperatorSet& ou = pb.OU();
    man.stage("assemble", t0);

    auto t1 = Clock::now();
    SteadyState st = solve_steady(sp, op, pb.params, nullptr, newton_options(c));
    ThresholdOptions to;
    to.seed = c.seed;
    ThresholdResult l2 = lambda2(st, su, ou, to);
    const double gamma = 1.0 - pb.params.lambda * l2.theta;
    man.stage("steady_and_threshold", t1);

    double eps = 0.0;
    if (tc.epsilon) {
        eps = *tc.epsilon;
    } else {
        if (!(gamma > 0.0))
            throw ConfigError("transient.epsilon is required when lambda is not below lambda2");
        GronwallBound gb = gronwall_bound(tc.a_sup, tc.b_sup, tc.alpha);
        eps = smallness_epsilon(gb.delta_max, gamma, pb.params);
        man.summary()["gronwall_M"] = gb.M;
        man.summary()["gronwall_delta"] = gb.delta_max;
    }
    Vec3 ctr = Vec3::Zero(), chi1 = Vec3::Zero();
    for (int k = 0; k < su.dim; ++k) {
        ctr[k] = tc.center[k];
        chi1[k] = tc.chi1[k];
    }
    Vec x0 = initial_perturbation(
        su, ou,
        [ctr](const Vec3& x) {
            const double e = std::exp(-(x - ctr).squaredNorm());
            return Vec3(-x[1] * e, x[0] * e, 0.0);
        },
        chi1);
    Vec chi0(su.dim);
    for (int k = 0; k < su.dim; ++k) chi0[k] = tc.chi0[k];
    const double nrm = data_norm(ou, su, x0, chi0);
    if (!(nrm > 0.0)) throw ConfigError("transient initial data vanish; change transient.center or chi values");
    x0 *= eps / nrm;
    chi0 *= eps / nrm;

    IntegratorOptions io;
    int snap = 0;
    if (tc.snapshot_every > 0 && tc.integrator == "monolithic") {
        fs::create_directories(path_in(c, "snapshots"));
        int step = 0;
        io.observer = [&, step](double, const Vec& x, const Vec&) mutable {
            if (++step % tc.snapshot_every) return;
            char name[64];
            std::snprintf(name, sizeof name, "snapshots/u_%05d.vtk", ++snap);
            write_vtk_fields(su.comp, velocity_field(su, su.P * x, "perturbation"), path_in(c, name));
            man.file(name);
        };
    }
    auto t2 = Clock::now();
    Trajectory traj;
    if (tc.integrator == "monolithic") {
        traj = integrate_monolithic(su, ou, st, pb.params, x0, chi0, tc.t_end, tc.dt, io);
    } else {
        ModalBasis basis = stokes_fsi_modes(su, ou, tc.N);
        OdeSystem sys = assemble_ode_tensors(su, basis, st, pb.params);
        GalerkinState g0 = project_initial_data(x0, chi0, basis, ou);
        traj = integrate_galerkin(sys, g0, tc.t_end, tc.dt, io);
    }
    man.stage("integrate", t2);

    CsvWriter csv({"t", "dt", "energy", "u_norm2", "grad2", "sigma", "chi", "newton_iters"});
    SvgSeries es{"energy", {}, {}};
    bool positive = true;
    for (const auto& r : traj.steps) {
        csv.row({r.t, r.dt, r.energy, r.u_norm2, r.grad2, r.sigma, r.chi, r.newton_iters});
        es.x.push_back(r.t);
        es.y.push_back(r.energy);
        positive = positive && r.energy > 0.0;
    }
    csv.write(path_in(c, "energy.csv"));
    man.file("energy.csv");
    if (c.plots && try_plot(path_in(c, "energy.svg"), "Perturbation energy", "t", "E", {es}, positive, out))
        man.file("energy.svg");

    EnergyReport rep = energy_monitor(traj, l2, pb.params, tc.decay_factor);
    man.summary()["lambda"] = pb.params.lambda;
    man.summary()["lambda2"] = l2.infinite ? ojson("inf") : ojson(l2.value());
    man.summary()["gamma"] = gamma;
    man.summary()["epsilon"] = eps;
    man.summary()["violations"] = rep.violations;
    man.summary()["initial_metric"] = rep.initial_metric;
    man.summary()["final_metric"] = rep.final_metric;
    man.summary()["dt_halvings"] = traj.dt_halvings;
    man.monitor("energy_applicable", rep.applicable);
    man.monitor("energy_inequality", rep.violations == 0);
    man.monitor("tail_monotone", !rep.tail_oscillation);
    man.monitor("energy_monitor", rep.pass);
    out << "transient: " << traj.steps.size() - 1 << " steps, violations = " << rep.violations
        << ", monitor " << (rep.pass ? "pass" : "fail") << "\n";
    man.write("ok");
    return kExitOk;
}

// ---------------------------------------------------------------- bifurcate

int cmd_bifurcate(const RunConfig& c, std::ostream& out) {
    const auto& bc = c.bifurcation;
    Manifest man(c, "bifurcate");
    auto t0 = Clock::now();
    Problem pb(c);
    const FsiSpace& sp = pb.P();
    const OperatorSet& op = pb.OP();
    man.stage("assemble", t0);

    PencilOptions po;
    po.nev = bc.nev;
    po.sigma = bc.sigma;
    po.method = eig_method(bc.method);
    po.dense_limit = bc.dense_limit;
    po.tol = bc.tol;
    po.seed = c.seed;

    const bool frozen = bc.base_flow != "branch";
    Vec u0;
    Branch br;
    if (bc.base_flow == "strain") {
        if (sp.dim != 2) throw ConfigError("bifurcation.base_flow = \"strain\" needs a 2D body");
        u0 = strain_base_flow(sp, bc.kappa);
    } else if (bc.base_flow == "frozen_steady") {
        NondimParams p = pb.params;
        p.lambda = bc.base_lambda;
        u0 = solve_steady(sp, op, p, nullptr, newton_options(c)).u_full;
    } else {
        br = load_branch_checked(branch_dir(c, bc.branch), sp);
    }

    // sample lambdas: a uniform grid for a frozen flow, the branch states otherwise
    std::vector<double> lambdas;
    std::vector<const SteadyState*> states;
    if (frozen) {
        for (int i = 0; i < bc.samples; ++i)
            lambdas.push_back(bc.lambda_min + (bc.lambda_max - bc.lambda_min) * i / (bc.samples - 1));
    } else {
        for (const auto& s : br.states)
            if (s.lambda >= bc.lambda_min && s.lambda <= bc.lambda_max) {
                lambdas.push_back(s.lambda);
                states.push_back(&s);
            }
        if (lambdas.size() < 2) throw ConfigError("fewer than two branch states inside the lambda window");
    }
    const int n = static_cast<int>(lambdas.size());
    std::vector<PencilSample> samples(n);
    auto t1 = Clock::now();
    parallel_for(n, c.jobs, [&](int i) {
        const Vec& base = frozen ? u0 : states[i]->u_full;
        samples[i] = pencil_sample(sp, op, base, lambdas[i], pb.params, po);
    });
    for (int i = 1; i < n; ++i) {
        if (samples[i].no_candidate || samples[i - 1].no_candidate) continue;
        const Vec& a = samples[i].w;
        const Vec& b = samples[i - 1].w;
        samples[i].overlap = std::abs(a.dot(op.M_w * b));
        samples[i].path_jump = samples[i].overlap <= 0.5;
    }
    man.stage("path", t1);

    MuEvaluator eval = [&](double l) {
        if (frozen) return pencil_sample(sp, op, u0, l, pb.params, po).mu.real();
        const SteadyState* near = nullptr;
        for (const auto& s : br.states)
            if (!near || std::abs(s.lambda - l) < std::abs(near->lambda - l)) near = &s;
        NondimParams p = pb.params;
        p.lambda = l;
        SteadyState st = solve_steady(sp, op, p, near, newton_options(c));
        return pencil_sample(sp, op, st.u_full, l, pb.params, po).mu.real();
    };
    EigenPath path{samples};
    auto t2 = Clock::now();
    std::vector<double> crossings = detect_crossing(path, eval, bc.crossing_tol);
    man.stage("crossing", t2);

    std::vector<std::string> header = {"lambda", "mu_re", "mu_im", "residual", "adjoint_consistency", "overlap",
                                       "path_jump", "complex_pair"};
    for (auto& h : axis_names(sp.dim, "chi")) header.push_back(h);
    CsvWriter csv(header);
    SvgSeries ms{"Re mu", {}, {}}, one{"mu = 1", {}, {}};
    int jumps = 0;
    for (const auto& s : samples) {
        std::vector<CsvValue> row = {s.lambda, s.mu.real(), s.mu.imag(), s.residual, s.adjoint_consistency,
                                     s.overlap, s.path_jump ? 1 : 0, s.complex_pair ? 1 : 0};
        for (int k = 0; k < sp.dim; ++k)
            row.emplace_back(s.chi.size() == sp.dim ? CsvValue(s.chi[k]) : CsvValue(""));
        csv.row(row);
        ms.x.push_back(s.lambda);
        ms.y.push_back(s.mu.real());
        jumps += s.path_jump ? 1 : 0;
    }
    one.x = {lambdas.front(), lambdas.back()};
    one.y = {1.0, 1.0};
    csv.write(path_in(c, "path.csv"));
    man.file("path.csv");

    ojson rep;
    rep["base_flow"] = bc.base_flow;
    rep["lambda_window"] = {bc.lambda_min, bc.lambda_max};
    rep["samples"] = n;
    rep["path_jumps"] = jumps;
    rep["crossings"] = crossings;
    BifurcationReport br_rep;
    if (crossings.empty()) {
        br_rep = report(std::nullopt, 0.0, SimplicityResult{}, std::nullopt);
    } else {
        const double ls = crossings.front();
        auto t3 = Clock::now();
        const Vec* base = &u0;
        SteadyState st;
        if (!frozen) {
            const SteadyState* near = nullptr;
            for (const auto& s : br.states)
                if (!near || std::abs(s.lambda - ls) < std::abs(near->lambda - ls)) near = &s;
            NondimParams p = pb.params;
            p.lambda = ls;
            st = solve_steady(sp, op, p, near, newton_options(c));
            base = &st.u_full;
        }
        PencilSample at = pencil_sample(sp, op, *base, ls, pb.params, po);
        SimplicityResult simp;
        if (!at.complex_pair) simp = simplicity_check(at, sp, op, *base, bc.range_threshold, bc.cluster_tol);
        std::optional<Transversality> tr;
        std::string tr_err;
        try {
            tr = transversality(ls, eval, bc.delta);
        } catch (const FDInconclusive& e) {
            tr_err = e.what();
        }
        br_rep = report(ls, at.mu.real(), simp, tr, tr_err, bc.crossing_tol);
        man.stage("report", t3);
    }
    rep["verdict"] = br_rep.verdict;
    rep["candidate"] = br_rep.candidate;
    if (!crossings.empty()) {
        rep["lambda_s"] = br_rep.lambda_s;
        rep["mu_residual"] = br_rep.mu_residual;
        rep["simplicity"] = {{"kernel_dim", br_rep.simplicity.kernel_dim},
                             {"range_residual", br_rep.simplicity.range_residual},
                             {"range_threshold", br_rep.simplicity.range_threshold},
                             {"simple", br_rep.simplicity.simple}};
        if (br_rep.trans) {
            const auto& t = *br_rep.trans;
            rep["transversality"] = {{"slope", t.slope},           {"mu_prime", t.mu_prime},
                                     {"slope_coarse", t.slope_coarse}, {"slope_fine", t.slope_fine},
                                     {"delta", t.delta},           {"noise", t.noise},
                                     {"nonzero", t.nonzero}};
            if (frozen) {
                const double expected = -1.0 / br_rep.lambda_s;
                const double rel = std::abs(t.mu_prime - expected) / std::abs(expected);
                rep["frozen_identity"] = {{"expected_mu_prime", expected},
                                          {"relative_error", rel},
                                          {"tolerance", 1e-4},
                                          {"pass", rel < 1e-4}};
                man.monitor("frozen_identity", rel < 1e-4);
            }
        } else {
            rep["transversality"] = {{"error", br_rep.trans_error}};
        }
    }
    {
        std::ofstream os(path_in(c, "report.json"));
        os << rep.dump(2) << "\n";
    }
    man.file("report.json");
    if (c.plots && try_plot(path_in(c, "mu_path.svg"), "Eigenvalue path", "lambda", "mu", {ms, one}, false, out))
        man.file("mu_path.svg");
    man.summary()["verdict"] = br_rep.verdict;
    man.monitor("no_path_jumps", jumps == 0);
    out << "bifurcate: " << br_rep.verdict;
    if (!crossings.empty()) out << " at lambda = " << brief(br_rep.lambda_s);
    out << "\n";
    man.write("ok");
    return kExitOk;
}

// ---------------------------------------------------------------- dispatch

int run_command(const std::string& command, RunConfig config, std::ostream& out, std::ostream& err) {
    try {
        if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
            throw ConfigError("unknown command '" + command + "'");
        fs::create_directories(config.out_dir);
        if (command == "mesh") return cmd_mesh(config, out);
        if (command == "steady") return cmd_steady(config, out);
        if (command == "thresholds") return cmd_thresholds(config, out);
        if (command == "modes") return cmd_modes(config, out);
        if (command == "transient") return cmd_transient(config, out);
        return cmd_bifurcate(config, out);
    } catch (const NaNOutput& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const OrderingViolation& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const PreconditionViolation& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const EmptyDomain& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const UnsupportedDegree& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const BasisMismatch& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const TensorTooLarge& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitSolver;
    }
}

int run_command(const std::string& command, const std::string& config_path, const CliOverrides& ov,
                std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_run_config(config_path);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (ov.jobs) {
        if (*ov.jobs < 1) {
            err << "error: --jobs must be >= 1\n";
            return kExitValidation;
        }
        cfg.jobs = *ov.jobs;
    }
    if (ov.seed) cfg.seed = *ov.seed;
    return run_command(command, std::move(cfg), out, err);
}

}  // namespace fsilab
