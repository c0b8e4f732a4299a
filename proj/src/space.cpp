// SPDX-License-Identifier: Apache-2.0
#include "fsilab/space.hpp"

#include <cmath>
#include <map>
#include <string>

#include "fsilab/errors.hpp"
#include "fsilab/fe.hpp"

namespace fsilab {

void NondimParams::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw PreconditionViolation("lambda must be >= 0");
    if (!(omega_n2 > 0.0) || !std::isfinite(omega_n2)) throw PreconditionViolation("omega_n2 must be > 0");
    if (!(varpi > 0.0) || !std::isfinite(varpi)) throw PreconditionViolation("varpi must be > 0");
}

void PhysicalParams::validate() const {
    const std::pair<const char*, double> fields[] = {{"V", V}, {"L", L}, {"nu", nu}, {"rho", rho}, {"M", M}, {"ell", ell}};
    for (const auto& [name, v] : fields)
        if (!(v > 0.0) || !std::isfinite(v)) throw PreconditionViolation(std::string(name) + " must be > 0");
}

NondimParams nondimensionalize(const PhysicalParams& phys) {
    phys.validate();
    NondimParams p;
    p.lambda = phys.V * phys.L / phys.nu;
    p.omega_n2 = std::pow(phys.L, 4) * phys.ell / (phys.M * phys.nu * phys.nu);
    p.varpi = phys.rho * std::pow(phys.L, 3) / phys.M;
    return p;
}

namespace {

Mesh barycentric_split(const Mesh& m) {
    Mesh s = m;
    s.cells.clear();
    for (const auto& c : m.cells) {
        Vec3 g = (m.vertices[c[0]] + m.vertices[c[1]] + m.vertices[c[2]]) / 3.0;
        s.vertices.push_back(g);
        int gi = static_cast<int>(s.vertices.size()) - 1;
        s.cells.push_back({c[0], c[1], gi, -1});
        s.cells.push_back({c[1], c[2], gi, -1});
        s.cells.push_back({c[2], c[0], gi, -1});
    }
    return s;
}

}  // namespace

FsiSpace build_fsi_space(const Mesh& mesh, int p_v, bool pin_rigid, ElementFamily family) {
    if (p_v != 2) throw UnsupportedDegree("only velocity degree 2 is implemented, got " + std::to_string(p_v));
    if (family == ElementFamily::Auto) family = mesh.dim == 2 ? ElementFamily::ScottVogelius : ElementFamily::TaylorHood;
    if (family == ElementFamily::ScottVogelius && mesh.dim != 2)
        throw UnsupportedDegree("the barycentric P2/P1disc pair is only available in 2D");

    FsiSpace s;
    s.mesh = mesh;
    s.family = family;
    s.dim = mesh.dim;
    s.p_v = p_v;
    s.p_p = p_v - 1;
    s.pinned = pin_rigid;
    s.comp = family == ElementFamily::ScottVogelius ? barycentric_split(mesh) : mesh;
    const Mesh& cm = s.comp;
    const int d = s.dim;
    const int nv = static_cast<int>(cm.vertices.size());

    // P2 nodes: vertices, then edges in first-seen order
    s.nodes = cm.vertices;
    std::map<std::pair<int, int>, int> edge_id;
    const auto& edges = p2_edges(d);
    s.cell_nodes.resize(cm.cells.size());
    for (size_t c = 0; c < cm.cells.size(); ++c) {
        auto& cn = s.cell_nodes[c];
        cn.fill(-1);
        for (int i = 0; i <= d; ++i) cn[i] = cm.cells[c][i];
        for (size_t e = 0; e < edges.size(); ++e) {
            int a = cm.cells[c][edges[e][0]], b = cm.cells[c][edges[e][1]];
            auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
            auto it = edge_id.find(key);
            int id;
            if (it == edge_id.end()) {
                id = static_cast<int>(s.nodes.size());
                s.nodes.push_back(0.5 * (cm.vertices[a] + cm.vertices[b]));
                edge_id.emplace(key, id);
            } else {
                id = it->second;
            }
            cn[d + 1 + e] = id;
        }
    }
    s.node_kind.assign(s.nodes.size(), NodeKind::Interior);
    for (size_t f = 0; f < cm.facets.size(); ++f) {
        NodeKind k = cm.facet_tags[f] == FacetTag::Body ? NodeKind::Body : NodeKind::Outer;
        const auto& t = cm.facets[f];
        for (int i = 0; i < d; ++i) s.node_kind[t[i]] = k;
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) {
                int a = t[i], b = t[j];
                auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
                s.node_kind[edge_id.at(key)] = k;
            }
    }
    s.free_index.assign(s.nodes.size(), -1);
    for (int n = 0; n < s.n_nodes(); ++n)
        if (s.node_kind[n] == NodeKind::Interior) s.free_index[n] = s.n_free_nodes++;
    s.n_red = s.n_free_nodes * d + (pin_rigid ? 0 : d);
    s.rigid_offset = pin_rigid ? -1 : s.n_free_nodes * d;

    std::vector<Eigen::Triplet<double>> tp, tc, te;
    for (int n = 0; n < s.n_nodes(); ++n) {
        for (int k = 0; k < d; ++k) {
            int row = n * d + k;
            if (s.free_index[n] >= 0) tp.emplace_back(row, s.free_index[n] * d + k, 1.0);
            if (s.node_kind[n] == NodeKind::Body) {
                te.emplace_back(row, k, 1.0);
                if (!pin_rigid) tp.emplace_back(row, s.rigid_offset + k, 1.0);
            }
            if (!pin_rigid) tc.emplace_back(row, s.rigid_offset + k, 1.0);
        }
    }
    s.P.resize(s.n_full(), s.n_red);
    s.P.setFromTriplets(tp.begin(), tp.end());
    s.Pc.resize(s.n_full(), s.n_red);
    s.Pc.setFromTriplets(tc.begin(), tc.end());
    s.Ebody.resize(s.n_full(), d);
    s.Ebody.setFromTriplets(te.begin(), te.end());

    if (family == ElementFamily::ScottVogelius) {
        s.p_discontinuous = true;
        s.n_p = static_cast<int>(cm.cells.size()) * (d + 1);
        s.cell_pdofs.resize(cm.cells.size());
        for (size_t c = 0; c < cm.cells.size(); ++c)
            for (int i = 0; i < 4; ++i) s.cell_pdofs[c][i] = i <= d ? static_cast<int>(c) * (d + 1) + i : -1;
    } else {
        s.p_discontinuous = false;
        s.n_p = nv;
        s.cell_pdofs.resize(cm.cells.size());
        for (size_t c = 0; c < cm.cells.size(); ++c)
            for (int i = 0; i < 4; ++i) s.cell_pdofs[c][i] = i <= d ? cm.cells[c][i] : -1;
    }
    return s;
}

Vec FsiSpace::dirichlet_lift(const std::function<Vec3(const Vec3&)>& body_value,
                             const std::function<Vec3(const Vec3&)>& outer_value) const {
    Vec g = Vec::Zero(n_full());
    for (int n = 0; n < n_nodes(); ++n) {
        if (node_kind[n] == NodeKind::Interior) continue;
        Vec3 v = node_kind[n] == NodeKind::Body ? (body_value ? body_value(nodes[n]) : Vec3::Zero())
                                                : (outer_value ? outer_value(nodes[n]) : Vec3::Zero());
        for (int k = 0; k < dim; ++k) g[n * dim + k] = v[k];
    }
    return g;
}

Vec FsiSpace::body_lift(const Vec3& value) const {
    return dirichlet_lift([&](const Vec3&) { return value; }, nullptr);
}

Vec FsiSpace::rigid_part(const Vec& x) const {
    if (!has_rigid()) return Vec::Zero(dim);
    return x.segment(rigid_offset, dim);
}

}  // namespace fsilab
