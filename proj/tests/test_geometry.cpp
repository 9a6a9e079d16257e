#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "fitr/errors.hpp"
#include "fitr/geometry.hpp"

using namespace fitr;

namespace {

// Shoelace area of an explicit triangle, independent of the mesh class.
double shoelace(const Point2& a, const Point2& b, const Point2& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

// Brute-force containment by edge-side tests.
bool contains(const std::array<Point2, 3>& t, const Point2& p, double tol = 1e-12) {
  for (int k = 0; k < 3; ++k) {
    const Point2& a = t[k];
    const Point2& b = t[(k + 1) % 3];
    if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < -tol) return false;
  }
  return true;
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return Errc::InvalidData;
}

void check_mesh_properties(const TriangulationMesh& mesh, double domain_area) {
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto p = mesh.triangle_points(static_cast<int>(t));
    const double a = shoelace(p[0], p[1], p[2]);
    CHECK(a > 0.0);
    total += a;
  }
  CHECK(std::abs(total - domain_area) <= 1e-10 * domain_area);

  // Edge incidence counted from scratch: one triangle on the boundary, two inside.
  std::map<std::pair<int, int>, int> count;
  for (const auto& t : mesh.triangles())
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      count[{std::min(a, b), std::max(a, b)}]++;
    }
  int boundary_edges = 0;
  for (const auto& [e, c] : count) {
    CHECK((c == 1 || c == 2));
    boundary_edges += c == 1;
  }
  CHECK(static_cast<std::size_t>(boundary_edges) == mesh.boundary().size());

  // No hanging vertices: no vertex lies on or inside a triangle it does not belong to.
  for (int v = 0; v < static_cast<int>(mesh.vertices().size()); ++v)
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
      const auto& tri = mesh.triangles()[t];
      if (tri[0] == v || tri[1] == v || tri[2] == v) continue;
      CHECK_FALSE(contains(mesh.triangle_points(static_cast<int>(t)), mesh.vertices()[v], 1e-12));
    }
}

// Opposite vertex of every interior edge lies outside the circumcircle.
void check_delaunay(const TriangulationMesh& mesh) {
  for (const auto& e : mesh.edges()) {
    if (!e.interior()) continue;
    const auto t0 = mesh.triangle_points(e.triangles[0]);
    for (int v : mesh.triangles()[e.triangles[1]]) {
      if (v == e.v0 || v == e.v1) continue;
      const Point2 d = mesh.vertices()[v];
      const double ax = t0[0].x - d.x, ay = t0[0].y - d.y;
      const double bx = t0[1].x - d.x, by = t0[1].y - d.y;
      const double cx = t0[2].x - d.x, cy = t0[2].y - d.y;
      const double det = (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay) +
                         (cx * cx + cy * cy) * (ax * by - bx * ay);
      CHECK(det <= 1e-10);
    }
  }
}

}  // namespace

TEST_CASE("unit square with two triangles splits along a diagonal") {
  const auto square = rectangle_polygon(0, 0, 1, 1);
  const auto mesh = build_triangulation(square, 2);
  REQUIRE(mesh.num_triangles() == 2);
  CHECK(mesh.area() == doctest::Approx(1.0).epsilon(1e-14));
  int interior = 0;
  for (const auto& e : mesh.edges()) interior += e.interior();
  CHECK(interior == 1);
  check_mesh_properties(mesh, 1.0);
}

TEST_CASE("refined meshes respect the requested size and conform") {
  const auto square = rectangle_polygon(0, 0, 1, 1);
  for (int target : {8, 32, 200}) {
    const auto mesh = build_triangulation(square, target);
    CHECK(static_cast<int>(mesh.num_triangles()) >= target);
    CHECK(static_cast<int>(mesh.num_triangles()) <= 2 * target);
    check_mesh_properties(mesh, 1.0);
    check_delaunay(mesh);
  }
}

TEST_CASE("non-convex and convex polygons triangulate with exact area") {
  const std::vector<Point2> ell{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
  const auto mesh = build_triangulation(ell, 40);
  check_mesh_properties(mesh, 3.0);
  check_delaunay(mesh);

  std::vector<Point2> hexagon;
  for (int k = 0; k < 6; ++k) hexagon.push_back({std::cos(k * M_PI / 3), std::sin(k * M_PI / 3)});
  const double area = 1.5 * std::sqrt(3.0);
  const auto hmesh = build_triangulation(hexagon, 25);
  check_mesh_properties(hmesh, area);
  CHECK(polygon_area(hexagon) == doctest::Approx(area).epsilon(1e-14));
}

TEST_CASE("degenerate polygons are rejected") {
  const std::vector<Point2> collinear{{0, 0}, {1, 0}, {2, 0}};
  CHECK(code_of([&] { build_triangulation(collinear, 2); }) == Errc::DegeneratePolygon);
  const std::vector<Point2> bowtie{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK(code_of([&] { build_triangulation(bowtie, 2); }) == Errc::DegeneratePolygon);
  const std::vector<Point2> two{{0, 0}, {1, 0}};
  CHECK(code_of([&] { build_triangulation(two, 2); }) == Errc::DegeneratePolygon);
}

TEST_CASE("barycentric coordinates") {
  const std::array<Point2, 3> tri{{{0, 0}, {1, 0}, {0, 1}}};
  const auto b = barycentric(tri, {0.25, 0.25});
  CHECK(b[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b[2] == doctest::Approx(0.25).epsilon(1e-15));
  const auto v = barycentric(tri, {1, 0});
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK_FALSE(barycentric(tri, {1, 1}).inside());

  const std::array<Point2, 3> flat{{{0, 0}, {1, 1}, {2, 2}}};
  CHECK(code_of([&] { barycentric(flat, {0.5, 0.5}); }) == Errc::DegenerateTriangle);
}

TEST_CASE("locate agrees with brute-force containment") {
  const auto mesh = build_triangulation(rectangle_polygon(0, 0, 1, 1), 2);
  // Lowest id on a shared edge, none outside.
  CHECK(mesh.locate({0.5, 0.5}) == 0);
  CHECK_FALSE(mesh.locate({2.0, 2.0}).has_value());
  for (const Point2 p : {Point2{0.9, 0.9}, Point2{0.1, 0.1}, Point2{0.1, 0.8}}) {
    std::optional<int> expected;
    for (int t = 0; t < 2 && !expected; ++t)
      if (contains(mesh.triangle_points(t), p)) expected = t;
    CHECK(mesh.locate(p) == expected);
  }
}

TEST_CASE("locate and barycentric round trip on random points") {
  const auto mesh = build_triangulation(rectangle_polygon(0, 0, 1, 1), 32);
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Point2 p{u(gen), u(gen)};
    const auto t = mesh.locate(p);
    REQUIRE(t.has_value());
    const auto pts = mesh.triangle_points(*t);
    const auto b = barycentric(pts, p);
    CHECK(b.inside());
    const double x = b[0] * pts[0].x + b[1] * pts[1].x + b[2] * pts[2].x;
    const double y = b[0] * pts[0].y + b[1] * pts[1].y + b[2] * pts[2].y;
    CHECK(std::abs(x - p.x) < 1e-12);
    CHECK(std::abs(y - p.y) < 1e-12);
    CHECK(std::abs(b[0] + b[1] + b[2] - 1.0) < 1e-12);
    // Lowest id among all containing triangles.
    for (int s = 0; s < *t; ++s) CHECK_FALSE(contains(mesh.triangle_points(s), p));
  }
}

TEST_CASE("mesh validation and JSON round trip") {
  const std::vector<Point2> v{{0, 0}, {1, 0}, {0, 1}};
  CHECK(code_of([&] { TriangulationMesh(v, {{0, 2, 1}}); }) == Errc::MeshFailure);
  CHECK(code_of([&] { TriangulationMesh(v, {{0, 1, 5}}); }) == Errc::MeshFailure);
  CHECK(code_of([&] { TriangulationMesh(v, {}); }) == Errc::MeshFailure);

  const auto mesh = build_triangulation(rectangle_polygon(0, 0, 1, 1), 32);
  nlohmann::json j = mesh;
  const auto back = mesh_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.vertices() == mesh.vertices());
  CHECK(back.triangles() == mesh.triangles());
}

TEST_CASE("unit-square pixel grid layout") {
  const auto g = PixelGrid::unit_square(4);
  REQUIRE(g.size() == 16);
  CHECK(g.cell_area == doctest::Approx(1.0 / 16));
  CHECK(g.points[1].x == doctest::Approx(0.125));
  CHECK(g.points[1].y == doctest::Approx(0.375));
  CHECK(g.points[4].x == doctest::Approx(0.375));
}
