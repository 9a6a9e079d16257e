#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace fitr {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct BarycentricCoords {
  std::array<double, 3> lambda{};

  double operator[](std::size_t i) const { return lambda[i]; }
  bool inside(double tol = 1e-12) const {
    return lambda[0] >= -tol && lambda[1] >= -tol && lambda[2] >= -tol;
  }
};

using Triangle = std::array<int, 3>;

struct MeshEdge {
  int v0 = 0;  // v0 < v1
  int v1 = 0;
  std::vector<int> triangles;  // one entry on the boundary, two in the interior

  bool interior() const { return triangles.size() == 2; }
};

/// Twice the signed area of (a, b, c); positive when counterclockwise.
double orient2d(const Point2& a, const Point2& b, const Point2& c);

/// Barycentric coordinates of p with respect to the triangle (v0, v1, v2).
/// Throws Error(DegenerateTriangle) when the triangle has (near) zero area.
BarycentricCoords barycentric(const std::array<Point2, 3>& tri, const Point2& p);

/// Conforming triangulation of a simple polygonal domain. Immutable once built.
class TriangulationMesh {
 public:
  /// Validates orientation, edge incidence and conformity; throws
  /// Error(MeshFailure) on any violation.
  TriangulationMesh(std::vector<Point2> vertices, std::vector<Triangle> triangles);

  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<MeshEdge>& edges() const { return edges_; }
  const std::vector<int>& boundary() const { return boundary_; }

  std::size_t num_triangles() const { return triangles_.size(); }
  std::array<Point2, 3> triangle_points(int t) const;
  double triangle_area(int t) const;
  double area() const;

  /// Lowest-id triangle containing p (barycentric components >= -1e-12).
  std::optional<int> locate(const Point2& p) const;

 private:
  void build_edges();
  void build_boundary();
  void check_conformity() const;

  std::vector<Point2> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<MeshEdge> edges_;
  std::vector<int> boundary_;
  std::vector<std::array<double, 4>> boxes_;  // xmin, xmax, ymin, ymax per triangle
};

/// Signed area of a closed polygon (positive when counterclockwise).
double polygon_area(std::span<const Point2> polygon);

/// Constrained Delaunay mesh of a simple polygon with roughly
/// `target_triangle_count` triangles (the result lies in [target, 2*target]).
/// Throws Error(DegeneratePolygon) or Error(MeshFailure).
TriangulationMesh build_triangulation(std::span<const Point2> boundary_polygon,
                                      int target_triangle_count);

/// Axis-aligned rectangle [x0,x1] x [y0,y1] as a counterclockwise polygon.
std::vector<Point2> rectangle_polygon(double x0, double y0, double x1, double y1);

/// Pixel centers shared by every image in a data set, with the per-pixel area
/// used for discrete integrals.
struct PixelGrid {
  std::vector<Point2> points;
  double cell_area = 1.0;

  std::size_t size() const { return points.size(); }

  /// side x side cell-centered grid on [0,1]^2; pixel (j1, j2) sits at index
  /// j1 * side + j2 with coordinates ((j1 + 0.5) / side, (j2 + 0.5) / side).
  static PixelGrid unit_square(int side);
};

void to_json(nlohmann::json& j, const TriangulationMesh& mesh);
TriangulationMesh mesh_from_json(const nlohmann::json& j);

}  // namespace fitr
