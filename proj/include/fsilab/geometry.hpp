// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fsilab {

using Vec3 = Eigen::Vector3d;

enum class BodyKind { Disk, Ellipse, Sphere, Ellipsoid, PolyFile };

/// Star-shaped rigid body centred at the origin, rescaled to unit diameter.
class BodyShape {
public:
    static BodyShape disk();
    static BodyShape ellipse(double a, double b);
    static BodyShape sphere();
    static BodyShape ellipsoid(double a, double b, double c);
    static BodyShape polygon(std::vector<Eigen::Vector2d> vertices);
    static BodyShape poly_file(const std::string& path);

    BodyKind kind() const { return kind_; }
    int dim() const { return dim_; }
    const Vec3& semi_axes() const { return axes_; }
    const std::vector<Eigen::Vector2d>& polygon_vertices() const { return poly_; }
    /// Factor applied to the user-supplied geometry to reach unit diameter.
    double scale_factor() const { return scale_; }

    /// Distance from the origin to the boundary along the unit direction `dir`.
    double ray_radius(const Vec3& dir) const;
    double circumradius() const;
    double diameter() const;
    /// Signed radial offset of `x` from the boundary (zero on the boundary).
    double boundary_offset(const Vec3& x) const;
    /// Perimeter (2D) or surface area (3D) of the exact boundary.
    double boundary_measure() const;

    std::string name() const;

private:
    BodyKind kind_ = BodyKind::Disk;
    int dim_ = 2;
    Vec3 axes_ = Vec3(0.5, 0.5, 0.0);
    std::vector<Eigen::Vector2d> poly_;
    double scale_ = 1.0;
};

enum class FacetTag : int { Body = 1, Outer = 2 };

struct Mesh {
    int dim = 2;
    std::vector<Vec3> vertices;                 // z = 0 in 2D
    std::vector<std::array<int, 4>> cells;      // last entry unused in 2D
    std::vector<std::array<int, 3>> facets;     // last entry unused in 2D
    std::vector<FacetTag> facet_tags;
    double R = 0.0;
    double h = 0.0;
    bool symmetric = false;
    std::optional<BodyShape> body;

    int num_cell_vertices() const { return dim + 1; }
    int num_facet_vertices() const { return dim; }
    double cell_volume(int c) const;
    double facet_measure(int f) const;
    /// Sum of facet measures carrying `tag`.
    double tagged_measure(FacetTag tag) const;
    int count_facets(FacetTag tag) const;
    /// Longest BODY facet edge.
    double body_edge_length() const;
};

Mesh build_annulus_mesh(const BodyShape& body, double R, double h, bool symmetric);
Mesh refine(const Mesh& mesh);

struct MeshCheck {
    double min_volume = 0.0;
    double max_body_offset = 0.0;
    double max_outer_offset = 0.0;
    bool tags_cover_boundary = false;
    bool ok = false;
    std::string message;
};

MeshCheck check_mesh(const Mesh& mesh);
/// Throws MeshFailure when check_mesh reports a violation.
void validate_mesh(const Mesh& mesh);

/// Index of the vertex mirrored by x2 -> -x2, or -1 if no vertex matches.
std::vector<int> mirror_vertex_map(const std::vector<Vec3>& points, double tol);

void write_vtk(const Mesh& mesh, const std::string& path);
Mesh read_vtk(const std::string& path, std::optional<BodyShape> body = std::nullopt);

/// Point data written next to the mesh (vertex values only).
struct VtkPointField {
    std::string name;
    int components = 1;
    std::vector<double> values;  // vertex-major, `components` per vertex
};
void write_vtk_fields(const Mesh& mesh, const std::vector<VtkPointField>& fields,
                      const std::string& path);

}  // namespace fsilab
