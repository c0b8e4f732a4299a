// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "fsilab/errors.hpp"
#include "fsilab/geometry.hpp"

using namespace fsilab;

TEST(BodyShape, UnitDiameterAfterRescaling) {
    EXPECT_NEAR(BodyShape::disk().diameter(), 1.0, 1e-14);
    EXPECT_NEAR(BodyShape::sphere().diameter(), 1.0, 1e-14);
    BodyShape e = BodyShape::ellipse(3.0, 1.0);
    EXPECT_NEAR(e.diameter(), 1.0, 1e-12);
    EXPECT_NEAR(e.scale_factor(), 1.0 / 6.0, 1e-12);
    BodyShape sq = BodyShape::polygon({{1, 1}, {-1, 1}, {-1, -1}, {1, -1}});
    EXPECT_NEAR(sq.diameter(), 1.0, 1e-12);
}

TEST(BodyShape, RejectsBadInput) {
    EXPECT_THROW(BodyShape::ellipse(0.0, 1.0), PreconditionViolation);
    EXPECT_THROW(BodyShape::polygon({{1, 0}, {0, 1}}), PreconditionViolation);
}

TEST(Mesh, DiskAnnulusIsValid) {
    Mesh m = build_annulus_mesh(BodyShape::disk(), 4.0, 0.25, true);
    MeshCheck c = check_mesh(m);
    EXPECT_TRUE(c.ok) << c.message;
    EXPECT_GT(c.min_volume, 0.0);
    EXPECT_TRUE(c.tags_cover_boundary);
    EXPECT_LT(c.max_body_offset, 1e-12 * m.h);
    EXPECT_LT(c.max_outer_offset, 1e-12 * m.h);
    // cell areas add up to the area enclosed between the two boundary polygons
    double area = 0.0, polygon = 0.0;
    for (int i = 0; i < static_cast<int>(m.cells.size()); ++i) area += m.cell_volume(i);
    for (int f = 0; f < static_cast<int>(m.facets.size()); ++f) {
        const Vec3& a = m.vertices[m.facets[f][0]];
        const Vec3& b = m.vertices[m.facets[f][1]];
        const double tri = 0.5 * std::abs(a[0] * b[1] - a[1] * b[0]);
        if (m.facet_tags[f] == FacetTag::Outer) polygon += tri;
        if (m.facet_tags[f] == FacetTag::Body) polygon -= tri;
    }
    EXPECT_NEAR(area, polygon, 1e-10 * polygon);
    EXPECT_LT(area, M_PI * (16.0 - 0.25));
}

TEST(Mesh, BodyFacetCountDoublesWithHalfH) {
    Mesh a = build_annulus_mesh(BodyShape::disk(), 4.0, 0.25, true);
    Mesh b = build_annulus_mesh(BodyShape::disk(), 4.0, 0.125, true);
    double ratio = double(b.count_facets(FacetTag::Body)) / a.count_facets(FacetTag::Body);
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
}

TEST(Mesh, OuterBallInsideBodyIsEmpty) {
    EXPECT_THROW(build_annulus_mesh(BodyShape::disk(), 0.4, 0.1, true), EmptyDomain);
}

TEST(Mesh, NonPositiveSizeRejected) {
    EXPECT_THROW(build_annulus_mesh(BodyShape::disk(), 4.0, 0.0, true), PreconditionViolation);
}

TEST(Mesh, SymmetricMeshHasMirrorPartners) {
    Mesh m = build_annulus_mesh(BodyShape::disk(), 3.0, 0.5, true);
    std::vector<int> map = mirror_vertex_map(m.vertices, 1e-10);
    for (int v : map) ASSERT_GE(v, 0);
}

TEST(Refine, MultipliesCellsAndHalvesH2D) {
    Mesh m = build_annulus_mesh(BodyShape::disk(), 3.0, 0.5, true);
    Mesh r1 = refine(m);
    Mesh r2 = refine(r1);
    EXPECT_EQ(r1.cells.size(), 4 * m.cells.size());
    EXPECT_EQ(r2.cells.size(), 16 * m.cells.size());
    EXPECT_NEAR(r2.h, m.h / 4.0, 0.01 * m.h / 4.0);
    EXPECT_NEAR(r2.body_edge_length(), m.body_edge_length() / 4.0, 0.05 * m.body_edge_length() / 4.0);
    MeshCheck c = check_mesh(r2);
    EXPECT_TRUE(c.ok) << c.message;
    EXPECT_LT(c.max_body_offset, 1e-12);
}

TEST(Refine, MultipliesCells3D) {
    Mesh m = build_annulus_mesh(BodyShape::sphere(), 2.0, 0.75, true);
    Mesh r = refine(m);
    EXPECT_EQ(r.cells.size(), 8 * m.cells.size());
    MeshCheck c = check_mesh(r);
    EXPECT_TRUE(c.ok) << c.message;
    EXPECT_LT(c.max_body_offset, 1e-12);
}

TEST(Refine, CurvedEllipseVerticesStayOnBoundary) {
    Mesh m = build_annulus_mesh(BodyShape::ellipse(2.0, 1.0), 3.0, 0.5, true);
    Mesh r = refine(m);
    double worst = 0.0;
    for (size_t f = 0; f < r.facets.size(); ++f) {
        if (r.facet_tags[f] != FacetTag::Body) continue;
        for (int k = 0; k < 2; ++k)
            worst = std::max(worst, std::abs(r.body->boundary_offset(r.vertices[r.facets[f][k]])));
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(Vtk, RoundTripPreservesMesh) {
    Mesh m = build_annulus_mesh(BodyShape::disk(), 3.0, 0.5, true);
    const std::string path = (std::filesystem::temp_directory_path() / "fsilab_roundtrip.vtk").string();
    write_vtk(m, path);
    Mesh r = read_vtk(path, BodyShape::disk());
    std::remove(path.c_str());
    ASSERT_EQ(r.vertices.size(), m.vertices.size());
    ASSERT_EQ(r.cells.size(), m.cells.size());
    EXPECT_EQ(r.count_facets(FacetTag::Body), m.count_facets(FacetTag::Body));
    EXPECT_EQ(r.count_facets(FacetTag::Outer), m.count_facets(FacetTag::Outer));
    double d = 0.0;
    for (size_t i = 0; i < m.vertices.size(); ++i) d = std::max(d, (r.vertices[i] - m.vertices[i]).norm());
    EXPECT_LT(d, 1e-14);
}
