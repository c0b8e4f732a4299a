// SPDX-License-Identifier: Apache-2.0
#include "fsilab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <Eigen/Dense>

#include "fsilab/errors.hpp"

namespace fsilab {

namespace {

constexpr double kPi = std::numbers::pi;

double ellipse_perimeter(double a, double b) {
    // composite midpoint rule on a periodic integrand converges spectrally
    const int n = 4096;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        double t = 2.0 * kPi * (i + 0.5) / n;
        s += std::hypot(a * std::sin(t), b * std::cos(t));
    }
    return s * 2.0 * kPi / n;
}

double ellipsoid_area(double a, double b, double c) {
    const int nt = 400, np = 800;
    double s = 0.0;
    for (int i = 0; i < nt; ++i) {
        double th = kPi * (i + 0.5) / nt;
        for (int j = 0; j < np; ++j) {
            double ph = 2.0 * kPi * (j + 0.5) / np;
            Vec3 xt(a * std::cos(th) * std::cos(ph), b * std::cos(th) * std::sin(ph), -c * std::sin(th));
            Vec3 xp(-a * std::sin(th) * std::sin(ph), b * std::sin(th) * std::cos(ph), 0.0);
            s += xt.cross(xp).norm();
        }
    }
    return s * (kPi / nt) * (2.0 * kPi / np);
}

double tri_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

double signed_volume(const Mesh& m, const std::array<int, 4>& c) {
    const auto& v = m.vertices;
    if (m.dim == 2) {
        Vec3 e1 = v[c[1]] - v[c[0]], e2 = v[c[2]] - v[c[0]];
        return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
    }
    Vec3 e1 = v[c[1]] - v[c[0]], e2 = v[c[2]] - v[c[0]], e3 = v[c[3]] - v[c[0]];
    return e1.dot(e2.cross(e3)) / 6.0;
}

void orient_cells(Mesh& m) {
    for (auto& c : m.cells) {
        if (signed_volume(m, c) < 0.0) std::swap(c[0], c[1]);
    }
}

struct PairHash {
    size_t operator()(const std::pair<int, int>& p) const {
        return std::hash<long long>()((static_cast<long long>(p.first) << 32) ^ static_cast<unsigned>(p.second));
    }
};

std::pair<int, int> sorted_pair(int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); }

std::vector<std::array<int, 3>> sorted_facets(const Mesh& m, const std::array<int, 4>& c) {
    std::vector<std::array<int, 3>> out;
    if (m.dim == 2) {
        for (int i = 0; i < 3; ++i) {
            std::array<int, 3> f{c[i], c[(i + 1) % 3], -1};
            if (f[0] > f[1]) std::swap(f[0], f[1]);
            out.push_back(f);
        }
    } else {
        static const int fv[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
        for (auto& t : fv) {
            std::array<int, 3> f{c[t[0]], c[t[1]], c[t[2]]};
            std::sort(f.begin(), f.end());
            out.push_back(f);
        }
    }
    return out;
}

std::array<int, 3> sorted_facet(const Mesh& m, std::array<int, 3> f) {
    if (m.dim == 2) {
        f[2] = -1;
        if (f[0] > f[1]) std::swap(f[0], f[1]);
    } else {
        std::sort(f.begin(), f.end());
    }
    return f;
}

// ---- 2D O-grid ---------------------------------------------------------------

Mesh build_2d(const BodyShape& body, double R, double h, bool symmetric) {
    const double perim = body.boundary_measure();
    const int quarter = std::max(2, static_cast<int>(std::lround(perim / (4.0 * h))));
    const int nt = 4 * quarter;
    double rmin = 1e300;
    std::vector<double> rb(nt);
    std::vector<Vec3> dirs(nt);
    for (int j = 0; j <= nt / 2; ++j) {
        double t = 2.0 * kPi * j / nt;
        Vec3 d(std::cos(t), std::sin(t), 0.0);
        if (j == 0) d = Vec3(1, 0, 0);
        if (2 * j == nt) d = Vec3(-1, 0, 0);
        dirs[j] = d;
        if (j > 0 && 2 * j < nt) dirs[nt - j] = Vec3(d.x(), -d.y(), 0.0);
    }
    for (int j = 0; j < nt; ++j) {
        rb[j] = body.ray_radius(dirs[j]);
        rmin = std::min(rmin, rb[j]);
    }
    const double growth = std::log1p(2.0 * kPi / nt);
    const int nr = std::max(2, static_cast<int>(std::lround(std::log(R / rmin) / growth)));

    Mesh m;
    m.dim = 2;
    m.R = R;
    m.h = h;
    m.symmetric = symmetric;
    m.body = body;
    auto idx = [nt](int k, int j) { return k * nt + ((j % nt) + nt) % nt; };
    m.vertices.resize(static_cast<size_t>((nr + 1) * nt));
    for (int k = 0; k <= nr; ++k) {
        for (int j = 0; j < nt; ++j) {
            double rho = (k == nr) ? R : rb[j] * std::pow(R / rb[j], static_cast<double>(k) / nr);
            if (k == 0) rho = rb[j];
            m.vertices[idx(k, j)] = rho * dirs[j];
        }
        if (symmetric) {
            for (int j = nt / 2 + 1; j < nt; ++j) {
                const Vec3& up = m.vertices[idx(k, nt - j)];
                m.vertices[idx(k, j)] = Vec3(up.x(), -up.y(), 0.0);
            }
            m.vertices[idx(k, 0)].y() = 0.0;
            m.vertices[idx(k, nt / 2)].y() = 0.0;
        }
    }
    for (int k = 0; k < nr; ++k) {
        for (int j = 0; j < nt; ++j) {
            int v00 = idx(k, j), v10 = idx(k + 1, j), v11 = idx(k + 1, j + 1), v01 = idx(k, j + 1);
            bool diag = !symmetric || j < nt / 2;
            if (diag) {
                m.cells.push_back({v00, v10, v11, -1});
                m.cells.push_back({v00, v11, v01, -1});
            } else {
                m.cells.push_back({v00, v10, v01, -1});
                m.cells.push_back({v10, v11, v01, -1});
            }
        }
    }
    for (int j = 0; j < nt; ++j) {
        m.facets.push_back({idx(0, j), idx(0, j + 1), -1});
        m.facet_tags.push_back(FacetTag::Body);
    }
    for (int j = 0; j < nt; ++j) {
        m.facets.push_back({idx(nr, j), idx(nr, j + 1), -1});
        m.facet_tags.push_back(FacetTag::Outer);
    }
    orient_cells(m);
    return m;
}

// ---- 3D layered icosphere ------------------------------------------------------

void icosphere(int level, std::vector<Vec3>& pts, std::vector<std::array<int, 3>>& tris) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    pts = {Vec3(0, 1, p),  Vec3(0, -1, p),  Vec3(0, 1, -p), Vec3(0, -1, -p), Vec3(1, p, 0),  Vec3(-1, p, 0),
           Vec3(1, -p, 0), Vec3(-1, -p, 0), Vec3(p, 0, 1),  Vec3(-p, 0, 1),  Vec3(p, 0, -1), Vec3(-p, 0, -1)};
    for (auto& v : pts) v /= v.norm();
    // faces: all triples of mutually adjacent vertices (edge length 2 before normalization)
    const double edge = 2.0 / std::sqrt(1.0 + p * p);
    for (int a = 0; a < 12; ++a)
        for (int b = a + 1; b < 12; ++b)
            for (int c = b + 1; c < 12; ++c) {
                auto near = [&](int i, int j) { return std::abs((pts[i] - pts[j]).norm() - edge) < 1e-9; };
                if (near(a, b) && near(b, c) && near(a, c)) {
                    std::array<int, 3> t{a, b, c};
                    Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
                    if (n.dot(pts[a] + pts[b] + pts[c]) < 0) std::swap(t[1], t[2]);
                    tris.push_back(t);
                }
            }
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            auto key = sorted_pair(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            Vec3 q = pts[a] + pts[b];
            q /= q.norm();
            pts.push_back(q);
            int id = static_cast<int>(pts.size()) - 1;
            mid[key] = id;
            return id;
        };
        std::vector<std::array<int, 3>> next;
        for (auto& t : tris) {
            int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({ab, t[1], bc});
            next.push_back({ca, bc, t[2]});
            next.push_back({ab, bc, ca});
        }
        tris.swap(next);
    }
}

Mesh build_3d(const BodyShape& body, double R, double h, bool symmetric) {
    // icosahedron edge on the unit sphere is ~1.0515; pick the level whose edge on the body is <= ~h
    const double rb_mean = 0.5;
    int level = 0;
    while (1.0515 * rb_mean / std::pow(2.0, level) > 1.2 * h && level < 6) ++level;
    std::vector<Vec3> dirs;
    std::vector<std::array<int, 3>> tris;
    icosphere(level, dirs, tris);
    const int ns = static_cast<int>(dirs.size());
    std::vector<double> rb(ns);
    double rmin = 1e300;
    for (int i = 0; i < ns; ++i) {
        rb[i] = body.ray_radius(dirs[i]);
        rmin = std::min(rmin, rb[i]);
    }
    const double ang = 1.0515 / std::pow(2.0, level);
    const int nr = std::max(2, static_cast<int>(std::lround(std::log(R / rmin) / std::log1p(ang))));

    Mesh m;
    m.dim = 3;
    m.R = R;
    m.h = h;
    m.symmetric = symmetric;
    m.body = body;
    for (int k = 0; k <= nr; ++k) {
        for (int i = 0; i < ns; ++i) {
            double rho = (k == 0) ? rb[i] : (k == nr ? R : rb[i] * std::pow(R / rb[i], static_cast<double>(k) / nr));
            m.vertices.push_back(rho * dirs[i]);
        }
    }
    auto id = [ns](int k, int i) { return k * ns + i; };
    if (!symmetric) {
        for (int k = 0; k < nr; ++k) {
            for (auto t : tris) {
                std::sort(t.begin(), t.end());
                int a0 = id(k, t[0]), b0 = id(k, t[1]), c0 = id(k, t[2]);
                int a1 = id(k + 1, t[0]), b1 = id(k + 1, t[1]), c1 = id(k + 1, t[2]);
                m.cells.push_back({a0, b1, c1, a1});
                m.cells.push_back({a0, b0, b1, c1});
                m.cells.push_back({a0, b0, c0, c1});
            }
        }
    } else {
        std::map<std::tuple<int, int, int>, int> quad_center;
        auto center = [&](int k, int i, int j) {
            auto key = std::make_tuple(k, std::min(i, j), std::max(i, j));
            auto it = quad_center.find(key);
            if (it != quad_center.end()) return it->second;
            Vec3 c = 0.25 * (m.vertices[id(k, i)] + m.vertices[id(k, j)] + m.vertices[id(k + 1, i)] +
                             m.vertices[id(k + 1, j)]);
            m.vertices.push_back(c);
            int v = static_cast<int>(m.vertices.size()) - 1;
            quad_center[key] = v;
            return v;
        };
        for (int k = 0; k < nr; ++k) {
            for (const auto& t : tris) {
                Vec3 g = Vec3::Zero();
                for (int s = 0; s < 3; ++s) g += m.vertices[id(k, t[s])] + m.vertices[id(k + 1, t[s])];
                m.vertices.push_back(g / 6.0);
                int cg = static_cast<int>(m.vertices.size()) - 1;
                m.cells.push_back({id(k, t[0]), id(k, t[1]), id(k, t[2]), cg});
                m.cells.push_back({id(k + 1, t[0]), id(k + 1, t[1]), id(k + 1, t[2]), cg});
                for (int s = 0; s < 3; ++s) {
                    int i = t[s], j = t[(s + 1) % 3];
                    int qc = center(k, i, j);
                    int q[4] = {id(k, i), id(k, j), id(k + 1, j), id(k + 1, i)};
                    for (int e = 0; e < 4; ++e) m.cells.push_back({q[e], q[(e + 1) % 4], qc, cg});
                }
            }
        }
    }
    for (const auto& t : tris) {
        m.facets.push_back({id(0, t[0]), id(0, t[1]), id(0, t[2])});
        m.facet_tags.push_back(FacetTag::Body);
    }
    for (const auto& t : tris) {
        m.facets.push_back({id(nr, t[0]), id(nr, t[1]), id(nr, t[2])});
        m.facet_tags.push_back(FacetTag::Outer);
    }
    orient_cells(m);
    return m;
}

}  // namespace

// ---- BodyShape ---------------------------------------------------------------

BodyShape BodyShape::disk() {
    BodyShape b;
    b.kind_ = BodyKind::Disk;
    b.dim_ = 2;
    b.axes_ = Vec3(0.5, 0.5, 0.0);
    return b;
}

BodyShape BodyShape::ellipse(double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw PreconditionViolation("ellipse semi-axes must be positive");
    BodyShape s;
    s.kind_ = BodyKind::Ellipse;
    s.dim_ = 2;
    s.scale_ = 1.0 / (2.0 * std::max(a, b));
    s.axes_ = Vec3(a * s.scale_, b * s.scale_, 0.0);
    return s;
}

BodyShape BodyShape::sphere() {
    BodyShape b;
    b.kind_ = BodyKind::Sphere;
    b.dim_ = 3;
    b.axes_ = Vec3(0.5, 0.5, 0.5);
    return b;
}

BodyShape BodyShape::ellipsoid(double a, double b, double c) {
    if (!(a > 0.0 && b > 0.0 && c > 0.0)) throw PreconditionViolation("ellipsoid semi-axes must be positive");
    BodyShape s;
    s.kind_ = BodyKind::Ellipsoid;
    s.dim_ = 3;
    s.scale_ = 1.0 / (2.0 * std::max({a, b, c}));
    s.axes_ = Vec3(a, b, c) * s.scale_;
    return s;
}

BodyShape BodyShape::polygon(std::vector<Eigen::Vector2d> vertices) {
    if (vertices.size() < 3) throw PreconditionViolation("polygon body needs at least 3 vertices");
    double diam = 0.0;
    for (const auto& p : vertices)
        for (const auto& q : vertices) diam = std::max(diam, (p - q).norm());
    BodyShape s;
    s.kind_ = BodyKind::PolyFile;
    s.dim_ = 2;
    s.scale_ = 1.0 / diam;
    for (auto& p : vertices) p *= s.scale_;
    // require star-shapedness about the origin with counterclockwise ordering
    for (size_t i = 0; i < vertices.size(); ++i) {
        const auto& p = vertices[i];
        const auto& q = vertices[(i + 1) % vertices.size()];
        if (p.x() * q.y() - p.y() * q.x() <= 0.0)
            throw PreconditionViolation("polygon body must be counterclockwise and star-shaped about the origin");
    }
    s.poly_ = std::move(vertices);
    s.axes_ = Vec3(0.5, 0.5, 0.0);
    return s;
}

BodyShape BodyShape::poly_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionViolation("cannot open polygon file " + path);
    std::vector<Eigen::Vector2d> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double x, y;
        if (ss >> x >> y) pts.emplace_back(x, y);
    }
    return polygon(std::move(pts));
}

double BodyShape::ray_radius(const Vec3& dir) const {
    switch (kind_) {
        case BodyKind::Disk:
        case BodyKind::Sphere:
            return 0.5;
        case BodyKind::Ellipse:
        case BodyKind::Ellipsoid: {
            double s = 0.0;
            for (int i = 0; i < dim_; ++i) s += (dir[i] / axes_[i]) * (dir[i] / axes_[i]);
            return 1.0 / std::sqrt(s);
        }
        case BodyKind::PolyFile: {
            Eigen::Vector2d d(dir.x(), dir.y());
            d.normalize();
            double best = 1e300;
            for (size_t i = 0; i < poly_.size(); ++i) {
                Eigen::Vector2d p = poly_[i], q = poly_[(i + 1) % poly_.size()];
                Eigen::Matrix2d A;
                A << d.x(), p.x() - q.x(), d.y(), p.y() - q.y();
                if (std::abs(A.determinant()) < 1e-300) continue;
                Eigen::Vector2d ts = A.partialPivLu().solve(p);
                if (ts[0] > 0.0 && ts[1] >= -1e-14 && ts[1] <= 1.0 + 1e-14) best = std::min(best, ts[0]);
            }
            return best;
        }
    }
    return 0.5;
}

double BodyShape::circumradius() const {
    if (kind_ == BodyKind::PolyFile) {
        double r = 0.0;
        for (const auto& p : poly_) r = std::max(r, p.norm());
        return r;
    }
    return axes_.head(dim_).maxCoeff();
}

double BodyShape::diameter() const { return 1.0; }

double BodyShape::boundary_offset(const Vec3& x) const {
    double r = x.head(dim_).norm();
    if (r == 0.0) return -ray_radius(Vec3(1, 0, 0));
    Vec3 d = Vec3::Zero();
    d.head(dim_) = x.head(dim_) / r;
    return r - ray_radius(d);
}

double BodyShape::boundary_measure() const {
    switch (kind_) {
        case BodyKind::Disk:
            return kPi;
        case BodyKind::Sphere:
            return kPi;
        case BodyKind::Ellipse:
            return ellipse_perimeter(axes_.x(), axes_.y());
        case BodyKind::Ellipsoid:
            return ellipsoid_area(axes_.x(), axes_.y(), axes_.z());
        case BodyKind::PolyFile: {
            double s = 0.0;
            for (size_t i = 0; i < poly_.size(); ++i) s += (poly_[(i + 1) % poly_.size()] - poly_[i]).norm();
            return s;
        }
    }
    return 0.0;
}

std::string BodyShape::name() const {
    switch (kind_) {
        case BodyKind::Disk: return "disk";
        case BodyKind::Ellipse: return "ellipse";
        case BodyKind::Sphere: return "sphere";
        case BodyKind::Ellipsoid: return "ellipsoid";
        case BodyKind::PolyFile: return "polygon";
    }
    return "unknown";
}

// ---- Mesh ------------------------------------------------------------------

double Mesh::cell_volume(int c) const { return signed_volume(*this, cells[c]); }

double Mesh::facet_measure(int f) const {
    const auto& t = facets[f];
    if (dim == 2) return (vertices[t[1]] - vertices[t[0]]).norm();
    return tri_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
}

double Mesh::tagged_measure(FacetTag tag) const {
    double s = 0.0;
    for (size_t f = 0; f < facets.size(); ++f)
        if (facet_tags[f] == tag) s += facet_measure(static_cast<int>(f));
    return s;
}

int Mesh::count_facets(FacetTag tag) const {
    return static_cast<int>(std::count(facet_tags.begin(), facet_tags.end(), tag));
}

double Mesh::body_edge_length() const {
    double hmax = 0.0;
    for (size_t f = 0; f < facets.size(); ++f) {
        if (facet_tags[f] != FacetTag::Body) continue;
        const auto& t = facets[f];
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) hmax = std::max(hmax, (vertices[t[i]] - vertices[t[j]]).norm());
    }
    return hmax;
}

Mesh build_annulus_mesh(const BodyShape& body, double R, double h, bool symmetric) {
    if (!(h > 0.0)) throw PreconditionViolation("mesh size h must be positive");
    if (R <= body.circumradius()) throw EmptyDomain("outer radius does not enclose the body");
    if (!(R > 0.5 * body.diameter() + h))
        throw PreconditionViolation("outer radius must exceed diam/2 + h");
    Mesh m = body.dim() == 2 ? build_2d(body, R, h, symmetric) : build_3d(body, R, h, symmetric);
    for (size_t c = 0; c < m.cells.size(); ++c)
        if (!(m.cell_volume(static_cast<int>(c)) > 0.0)) throw MeshFailure("generator produced an inverted cell");
    return m;
}

Mesh refine(const Mesh& mesh) {
    Mesh out;
    out.dim = mesh.dim;
    out.R = mesh.R;
    out.h = 0.5 * mesh.h;
    out.symmetric = mesh.symmetric;
    out.body = mesh.body;
    out.vertices = mesh.vertices;
    std::unordered_map<std::pair<int, int>, int, PairHash> mid;
    auto midpoint = [&](int a, int b) {
        auto key = sorted_pair(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        int id = static_cast<int>(out.vertices.size()) - 1;
        mid.emplace(key, id);
        return id;
    };
    // boundary facets first so their midpoints can be reprojected
    std::vector<int> body_mid, outer_mid;
    for (size_t f = 0; f < mesh.facets.size(); ++f) {
        const auto& t = mesh.facets[f];
        FacetTag tag = mesh.facet_tags[f];
        auto record = [&](int v) { (tag == FacetTag::Body ? body_mid : outer_mid).push_back(v); };
        if (mesh.dim == 2) {
            int m01 = midpoint(t[0], t[1]);
            record(m01);
            out.facets.push_back({t[0], m01, -1});
            out.facets.push_back({m01, t[1], -1});
            out.facet_tags.insert(out.facet_tags.end(), 2, tag);
        } else {
            int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
            record(ab);
            record(bc);
            record(ca);
            out.facets.push_back({t[0], ab, ca});
            out.facets.push_back({ab, t[1], bc});
            out.facets.push_back({ca, bc, t[2]});
            out.facets.push_back({ab, bc, ca});
            out.facet_tags.insert(out.facet_tags.end(), 4, tag);
        }
    }
    for (const auto& c : mesh.cells) {
        if (mesh.dim == 2) {
            int m01 = midpoint(c[0], c[1]), m12 = midpoint(c[1], c[2]), m02 = midpoint(c[0], c[2]);
            out.cells.push_back({c[0], m01, m02, -1});
            out.cells.push_back({m01, c[1], m12, -1});
            out.cells.push_back({m02, m12, c[2], -1});
            out.cells.push_back({m01, m12, m02, -1});
        } else {
            int x[4] = {c[0], c[1], c[2], c[3]};
            int e[4][4];
            for (int i = 0; i < 4; ++i)
                for (int j = i + 1; j < 4; ++j) e[i][j] = e[j][i] = midpoint(x[i], x[j]);
            out.cells.push_back({x[0], e[0][1], e[0][2], e[0][3]});
            out.cells.push_back({e[0][1], x[1], e[1][2], e[1][3]});
            out.cells.push_back({e[0][2], e[1][2], x[2], e[2][3]});
            out.cells.push_back({e[0][3], e[1][3], e[2][3], x[3]});
            // interior octahedron: split along its shortest diagonal
            std::array<std::pair<int, int>, 3> diag = {
                std::make_pair(e[0][1], e[2][3]), std::make_pair(e[0][2], e[1][3]), std::make_pair(e[0][3], e[1][2])};
            int best = 0;
            double len = 1e300;
            for (int d = 0; d < 3; ++d) {
                double l = (out.vertices[diag[d].first] - out.vertices[diag[d].second]).norm();
                if (l < len - 1e-14 * l) {
                    len = l;
                    best = d;
                }
            }
            auto p = diag[best];
            auto a = diag[(best + 1) % 3];
            auto b = diag[(best + 2) % 3];
            int ring[4] = {a.first, b.first, a.second, b.second};
            for (int r = 0; r < 4; ++r) out.cells.push_back({p.first, p.second, ring[r], ring[(r + 1) % 4]});
        }
    }
    if (mesh.body) {
        for (int v : body_mid) {
            Vec3 x = out.vertices[v];
            Vec3 d = x / x.norm();
            out.vertices[v] = d * mesh.body->ray_radius(d);
        }
    }
    for (int v : outer_mid) {
        Vec3 x = out.vertices[v];
        out.vertices[v] = x * (mesh.R / x.norm());
    }
    if (mesh.symmetric) {
        for (int v : body_mid)
            if (std::abs(out.vertices[v].y()) < 1e-15) out.vertices[v].y() = 0.0;
    }
    orient_cells(out);
    for (size_t c = 0; c < out.cells.size(); ++c)
        if (!(out.cell_volume(static_cast<int>(c)) > 0.0)) throw MeshFailure("refinement produced an inverted cell");
    return out;
}

MeshCheck check_mesh(const Mesh& mesh) {
    MeshCheck r;
    r.min_volume = 1e300;
    for (size_t c = 0; c < mesh.cells.size(); ++c) r.min_volume = std::min(r.min_volume, mesh.cell_volume(static_cast<int>(c)));
    std::map<std::array<int, 3>, int> count;
    for (const auto& c : mesh.cells)
        for (const auto& f : sorted_facets(mesh, c)) ++count[f];
    std::map<std::array<int, 3>, int> tagged;
    bool ok_tags = mesh.facet_tags.size() == mesh.facets.size();
    for (size_t f = 0; f < mesh.facets.size(); ++f) {
        auto key = sorted_facet(mesh, mesh.facets[f]);
        if (++tagged[key] > 1) ok_tags = false;
    }
    size_t nbdry = 0;
    for (const auto& [f, n] : count) {
        if (n == 1) {
            ++nbdry;
            if (!tagged.count(f)) ok_tags = false;
        } else if (n != 2) {
            ok_tags = false;
        }
    }
    if (nbdry != tagged.size()) ok_tags = false;
    r.tags_cover_boundary = ok_tags;
    for (size_t f = 0; f < mesh.facets.size(); ++f) {
        for (int i = 0; i < mesh.dim; ++i) {
            const Vec3& x = mesh.vertices[mesh.facets[f][i]];
            if (mesh.facet_tags[f] == FacetTag::Body) {
                if (mesh.body) r.max_body_offset = std::max(r.max_body_offset, std::abs(mesh.body->boundary_offset(x)));
            } else {
                r.max_outer_offset = std::max(r.max_outer_offset, std::abs(x.norm() - mesh.R));
            }
        }
    }
    const double tol = 1e-12 * std::max(mesh.h, 1.0);
    r.ok = r.min_volume > 0.0 && ok_tags && r.max_body_offset <= tol && r.max_outer_offset <= tol * mesh.R;
    if (!r.ok) {
        std::ostringstream ss;
        ss << "min volume " << r.min_volume << ", tags " << (ok_tags ? "ok" : "broken") << ", body offset "
           << r.max_body_offset << ", outer offset " << r.max_outer_offset;
        r.message = ss.str();
    }
    return r;
}

void validate_mesh(const Mesh& mesh) {
    auto r = check_mesh(mesh);
    if (!r.ok) throw MeshFailure(r.message);
}

std::vector<int> mirror_vertex_map(const std::vector<Vec3>& points, double tol) {
    std::map<std::tuple<long long, long long, long long>, std::vector<int>> grid;
    auto key = [tol](const Vec3& p) {
        return std::make_tuple(std::llround(p.x() / tol), std::llround(p.y() / tol), std::llround(p.z() / tol));
    };
    for (size_t i = 0; i < points.size(); ++i) grid[key(points[i])].push_back(static_cast<int>(i));
    std::vector<int> map(points.size(), -1);
    for (size_t i = 0; i < points.size(); ++i) {
        Vec3 q(points[i].x(), -points[i].y(), points[i].z());
        auto k = key(q);
        for (long long dx = -1; dx <= 1 && map[i] < 0; ++dx)
            for (long long dy = -1; dy <= 1 && map[i] < 0; ++dy)
                for (long long dz = -1; dz <= 1 && map[i] < 0; ++dz) {
                    auto it = grid.find({std::get<0>(k) + dx, std::get<1>(k) + dy, std::get<2>(k) + dz});
                    if (it == grid.end()) continue;
                    for (int j : it->second)
                        if ((points[j] - q).norm() <= tol) {
                            map[i] = j;
                            break;
                        }
                }
    }
    return map;
}

// ---- legacy VTK ----------------------------------------------------------------

namespace {

void write_vtk_geometry(std::ostream& os, const Mesh& mesh) {
    os.precision(17);
    os << "# vtk DataFile Version 3.0\nfsilab mesh R=" << mesh.R << " h=" << mesh.h << "\nASCII\n";
    os << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.vertices.size() << " double\n";
    for (const auto& v : mesh.vertices) os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    const int nc = static_cast<int>(mesh.cells.size()), nf = static_cast<int>(mesh.facets.size());
    const int cv = mesh.dim + 1, fv = mesh.dim;
    os << "CELLS " << nc + nf << ' ' << nc * (cv + 1) + nf * (fv + 1) << '\n';
    for (const auto& c : mesh.cells) {
        os << cv;
        for (int i = 0; i < cv; ++i) os << ' ' << c[i];
        os << '\n';
    }
    for (const auto& f : mesh.facets) {
        os << fv;
        for (int i = 0; i < fv; ++i) os << ' ' << f[i];
        os << '\n';
    }
    os << "CELL_TYPES " << nc + nf << '\n';
    for (int i = 0; i < nc; ++i) os << (mesh.dim == 2 ? 5 : 10) << '\n';
    for (int i = 0; i < nf; ++i) os << (mesh.dim == 2 ? 3 : 5) << '\n';
    os << "CELL_DATA " << nc + nf << "\nSCALARS facet_tag int 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < nc; ++i) os << "0\n";
    for (auto t : mesh.facet_tags) os << static_cast<int>(t) << '\n';
}

}  // namespace

void write_vtk(const Mesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw PreconditionViolation("cannot write " + path);
    write_vtk_geometry(os, mesh);
}

void write_vtk_fields(const Mesh& mesh, const std::vector<VtkPointField>& fields, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw PreconditionViolation("cannot write " + path);
    write_vtk_geometry(os, mesh);
    if (fields.empty()) return;
    os << "POINT_DATA " << mesh.vertices.size() << '\n';
    for (const auto& f : fields) {
        if (f.values.size() != mesh.vertices.size() * static_cast<size_t>(f.components))
            throw PreconditionViolation("field " + f.name + " has the wrong length");
        if (f.components == 1) {
            os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : f.values) os << v << '\n';
        } else {
            os << "VECTORS " << f.name << " double\n";
            for (size_t i = 0; i < mesh.vertices.size(); ++i) {
                for (int c = 0; c < 3; ++c) os << (c < f.components ? f.values[i * f.components + c] : 0.0) << (c < 2 ? ' ' : '\n');
            }
        }
    }
}

Mesh read_vtk(const std::string& path, std::optional<BodyShape> body) {
    std::ifstream in(path);
    if (!in) throw PreconditionViolation("cannot open " + path);
    Mesh m;
    std::string tok;
    std::vector<std::vector<int>> cells;
    std::vector<int> types, tags;
    while (in >> tok) {
        if (tok == "POINTS") {
            size_t n;
            std::string ty;
            in >> n >> ty;
            m.vertices.resize(n);
            for (auto& v : m.vertices) in >> v.x() >> v.y() >> v.z();
        } else if (tok == "CELLS") {
            size_t n, sz;
            in >> n >> sz;
            cells.resize(n);
            for (auto& c : cells) {
                int k;
                in >> k;
                c.resize(k);
                for (auto& v : c) in >> v;
            }
        } else if (tok == "CELL_TYPES") {
            size_t n;
            in >> n;
            types.resize(n);
            for (auto& t : types) in >> t;
        } else if (tok == "SCALARS") {
            std::string name, ty;
            in >> name >> ty;
            std::string rest;
            std::getline(in, rest);
            in >> tok >> tok;  // LOOKUP_TABLE default
            std::vector<int> vals(cells.size());
            for (auto& v : vals) in >> v;
            if (name == "facet_tag") tags = vals;
        }
    }
    if (cells.size() != types.size() || tags.size() != cells.size())
        throw MeshFailure("VTK file lacks matching CELLS / CELL_TYPES / facet_tag sections");
    bool has_tet = std::find(types.begin(), types.end(), 10) != types.end();
    m.dim = has_tet ? 3 : 2;
    const int cell_type = has_tet ? 10 : 5, facet_type = has_tet ? 5 : 3;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (types[i] == cell_type) {
            std::array<int, 4> c{-1, -1, -1, -1};
            for (size_t k = 0; k < cells[i].size(); ++k) c[k] = cells[i][k];
            m.cells.push_back(c);
        } else if (types[i] == facet_type) {
            std::array<int, 3> f{-1, -1, -1};
            for (size_t k = 0; k < cells[i].size(); ++k) f[k] = cells[i][k];
            if (tags[i] != 1 && tags[i] != 2) throw MeshFailure("boundary facet without BODY/OUTER tag");
            m.facets.push_back(f);
            m.facet_tags.push_back(static_cast<FacetTag>(tags[i]));
        } else {
            throw MeshFailure("unsupported VTK cell type " + std::to_string(types[i]));
        }
    }
    for (size_t f = 0; f < m.facets.size(); ++f)
        if (m.facet_tags[f] == FacetTag::Outer)
            for (int i = 0; i < m.dim; ++i) m.R = std::max(m.R, m.vertices[m.facets[f][i]].norm());
    m.body = body;
    m.h = m.body_edge_length();
    orient_cells(m);
    return m;
}

}  // namespace fsilab
