#include "fitr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "fitr/errors.hpp"

namespace fitr {

namespace {

double squared_distance(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Characteristic squared length used to make orientation tolerances
// scale-free.
double squared_scale(std::span<const Point2> pts) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double w = xmax - xmin;
  const double h = ymax - ymin;
  return w * w + h * h;
}

bool on_segment(const Point2& a, const Point2& b, const Point2& p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

int sign_of(double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); }

bool segments_intersect(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2,
                        double tol) {
  const int d1 = sign_of(orient2d(q1, q2, p1), tol);
  const int d2 = sign_of(orient2d(q1, q2, p2), tol);
  const int d3 = sign_of(orient2d(p1, p2, q1), tol);
  const int d4 = sign_of(orient2d(p1, p2, q2), tol);
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

void validate_polygon(std::span<const Point2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) throw Error(Errc::DegeneratePolygon, "polygon needs at least 3 vertices");
  for (const auto& p : poly) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(Errc::DegeneratePolygon, "polygon has non-finite coordinates");
  }
  const double scale2 = squared_scale(poly);
  if (scale2 <= 0.0) throw Error(Errc::DegeneratePolygon, "polygon has zero extent");
  const double tol = 1e-14 * scale2;
  if (std::abs(polygon_area(poly)) <= tol)
    throw Error(Errc::DegeneratePolygon, "polygon has zero area");

  for (std::size_t i = 0; i < n; ++i) {
    const Point2& prev = poly[(i + n - 1) % n];
    const Point2& cur = poly[i];
    const Point2& next = poly[(i + 1) % n];
    if (squared_distance(cur, next) <= tol)
      throw Error(Errc::DegeneratePolygon, "polygon has a repeated vertex");
    // Spike: the boundary folds back onto itself at `cur`.
    const double dot = (prev.x - cur.x) * (next.x - cur.x) + (prev.y - cur.y) * (next.y - cur.y);
    if (sign_of(orient2d(prev, cur, next), tol) == 0 && dot > 0.0)
      throw Error(Errc::DegeneratePolygon, "polygon folds back on itself");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n], tol))
        throw Error(Errc::DegeneratePolygon, "polygon is self-intersecting");
    }
  }
}

// Ear clipping of a counterclockwise simple polygon. Scans from vertex 0 and
// clips the first valid ear, which fixes the diagonal choice deterministically.
std::vector<Triangle> ear_clip(const std::vector<Point2>& pts) {
  const double tol = 1e-14 * squared_scale(pts);
  std::vector<int> poly(pts.size());
  for (std::size_t i = 0; i < poly.size(); ++i) poly[i] = static_cast<int>(i);

  std::vector<Triangle> tris;
  while (poly.size() > 3) {
    const std::size_t m = poly.size();
    bool clipped = false;
    for (std::size_t i = 0; i < m && !clipped; ++i) {
      const int prev = poly[(i + m - 1) % m];
      const int cur = poly[i];
      const int next = poly[(i + 1) % m];
      if (orient2d(pts[prev], pts[cur], pts[next]) <= tol) continue;
      bool blocked = false;
      for (int v : poly) {
        if (v == prev || v == cur || v == next) continue;
        const auto bc = barycentric({pts[cur], pts[next], pts[prev]}, pts[v]);
        if (bc.inside(1e-12)) {
          blocked = true;
          break;
        }
      }
      if (blocked) continue;
      tris.push_back({cur, next, prev});
      poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
    }
    if (!clipped) throw Error(Errc::MeshFailure, "ear clipping found no ear");
  }
  if (orient2d(pts[poly[0]], pts[poly[1]], pts[poly[2]]) <= tol)
    throw Error(Errc::MeshFailure, "ear clipping left a degenerate triangle");
  tris.push_back({poly[0], poly[1], poly[2]});
  return tris;
}

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

std::map<EdgeKey, std::vector<int>> edge_map(const std::vector<Triangle>& tris) {
  std::map<EdgeKey, std::vector<int>> edges;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    for (int e = 0; e < 3; ++e) {
      edges[edge_key(tris[t][e], tris[t][(e + 1) % 3])].push_back(static_cast<int>(t));
    }
  }
  return edges;
}

// Rotates a triangle so that its first two vertices are a -> b (counterclockwise
// direction); returns the opposite vertex, or -1 when a -> b is not an edge in
// that direction.
int opposite_along(const Triangle& t, int a, int b) {
  for (int e = 0; e < 3; ++e) {
    if (t[e] == a && t[(e + 1) % 3] == b) return t[(e + 2) % 3];
  }
  return -1;
}

// Positive when d lies strictly inside the circumcircle of counterclockwise (a, b, c).
double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

// Lawson flips until every interior edge is locally Delaunay. Boundary edges
// have one incident triangle and are never touched.
void make_delaunay(const std::vector<Point2>& pts, std::vector<Triangle>& tris) {
  const double scale2 = squared_scale(pts);
  const double orient_tol = 1e-14 * scale2;
  const double circle_tol = 1e-12 * scale2 * scale2;
  const std::size_t max_flips = 100 * tris.size() * tris.size() + 100;
  std::size_t flips = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [key, incident] : edge_map(tris)) {
      if (incident.size() != 2) continue;
      int t1 = incident[0], t2 = incident[1];
      int a = key.first, b = key.second;
      int p = opposite_along(tris[t1], a, b);
      if (p < 0) {
        std::swap(t1, t2);
        p = opposite_along(tris[t1], a, b);
      }
      const int q = opposite_along(tris[t2], b, a);
      if (p < 0 || q < 0) throw Error(Errc::MeshFailure, "inconsistent triangle orientation");
      if (incircle(pts[a], pts[b], pts[p], pts[q]) <= circle_tol) continue;
      if (orient2d(pts[a], pts[q], pts[p]) <= orient_tol ||
          orient2d(pts[q], pts[b], pts[p]) <= orient_tol)
        continue;
      tris[t1] = {a, q, p};
      tris[t2] = {q, b, p};
      changed = true;
      if (++flips > max_flips) throw Error(Errc::MeshFailure, "edge flipping did not converge");
      break;
    }
  }
}

// Splits the longest edge of the largest triangle at its midpoint (and the
// neighbour across that edge when it is interior).
void bisect_largest(std::vector<Point2>& pts, std::vector<Triangle>& tris) {
  int best = 0;
  double best_area = -1.0;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const double a = orient2d(pts[tris[t][0]], pts[tris[t][1]], pts[tris[t][2]]);
    if (a > best_area * (1.0 + 1e-12)) {
      best_area = a;
      best = static_cast<int>(t);
    }
  }
  const Triangle tri = tris[best];
  int edge = 0;
  double longest = -1.0;
  for (int e = 0; e < 3; ++e) {
    const double len = squared_distance(pts[tri[e]], pts[tri[(e + 1) % 3]]);
    if (len > longest * (1.0 + 1e-12)) {
      longest = len;
      edge = e;
    }
  }
  const int a = tri[edge];
  const int b = tri[(edge + 1) % 3];
  const int p = tri[(edge + 2) % 3];
  const int m = static_cast<int>(pts.size());
  pts.push_back({0.5 * (pts[a].x + pts[b].x), 0.5 * (pts[a].y + pts[b].y)});

  int neighbour = -1;
  int q = -1;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (static_cast<int>(t) == best) continue;
    const int opp = opposite_along(tris[t], b, a);
    if (opp >= 0) {
      neighbour = static_cast<int>(t);
      q = opp;
      break;
    }
  }
  tris[best] = {a, m, p};
  tris.push_back({m, b, p});
  if (neighbour >= 0) {
    tris[neighbour] = {b, m, q};
    tris.push_back({m, a, q});
  }
}

}  // namespace

double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

BarycentricCoords barycentric(const std::array<Point2, 3>& tri, const Point2& p) {
  const double det = orient2d(tri[0], tri[1], tri[2]);
  const double scale2 = std::max({squared_distance(tri[0], tri[1]), squared_distance(tri[1], tri[2]),
                                  squared_distance(tri[2], tri[0])});
  if (!(std::abs(det) > 1e-14 * scale2)) throw Error(Errc::DegenerateTriangle, "degenerate triangle");
  BarycentricCoords bc;
  bc.lambda[1] = orient2d(tri[0], p, tri[2]) / det;
  bc.lambda[2] = orient2d(tri[0], tri[1], p) / det;
  bc.lambda[0] = 1.0 - bc.lambda[1] - bc.lambda[2];
  return bc;
}

double polygon_area(std::span<const Point2> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

std::vector<Point2> rectangle_polygon(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

PixelGrid PixelGrid::unit_square(int side) {
  PixelGrid grid;
  grid.points.reserve(static_cast<std::size_t>(side) * side);
  for (int j1 = 0; j1 < side; ++j1) {
    for (int j2 = 0; j2 < side; ++j2) {
      grid.points.push_back({(j1 + 0.5) / side, (j2 + 0.5) / side});
    }
  }
  grid.cell_area = 1.0 / (static_cast<double>(side) * side);
  return grid;
}

// ---------------------------------------------------------------------------

TriangulationMesh::TriangulationMesh(std::vector<Point2> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  if (vertices_.size() < 3 || triangles_.empty())
    throw Error(Errc::MeshFailure, "mesh needs at least one triangle");
  const double tol = 1e-14 * squared_scale(vertices_);
  const int nv = static_cast<int>(vertices_.size());
  for (const auto& t : triangles_) {
    for (int v : t) {
      if (v < 0 || v >= nv) throw Error(Errc::MeshFailure, "triangle references a missing vertex");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw Error(Errc::MeshFailure, "triangle repeats a vertex");
    if (!(orient2d(vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]) > tol))
      throw Error(Errc::MeshFailure, "triangle is not counterclockwise with positive area");
  }
  build_edges();
  build_boundary();
  check_conformity();

  boxes_.reserve(triangles_.size());
  for (const auto& t : triangles_) {
    const Point2& a = vertices_[t[0]];
    const Point2& b = vertices_[t[1]];
    const Point2& c = vertices_[t[2]];
    boxes_.push_back({std::min({a.x, b.x, c.x}), std::max({a.x, b.x, c.x}),
                      std::min({a.y, b.y, c.y}), std::max({a.y, b.y, c.y})});
  }
}

void TriangulationMesh::build_edges() {
  for (auto& [key, incident] : edge_map(triangles_)) {
    if (incident.size() > 2) throw Error(Errc::MeshFailure, "edge shared by more than two triangles");
    if (incident.size() == 2) {
      // The two triangles must traverse the shared edge in opposite directions.
      const auto& t1 = triangles_[incident[0]];
      const auto& t2 = triangles_[incident[1]];
      const bool forward1 = opposite_along(t1, key.first, key.second) >= 0;
      const bool forward2 = opposite_along(t2, key.first, key.second) >= 0;
      if (forward1 == forward2) throw Error(Errc::MeshFailure, "overlapping triangles");
    }
    edges_.push_back({key.first, key.second, incident});
  }
}

void TriangulationMesh::build_boundary() {
  std::map<int, int> next;
  for (const auto& e : edges_) {
    if (e.interior()) continue;
    const auto& t = triangles_[e.triangles[0]];
    const bool forward = opposite_along(t, e.v0, e.v1) >= 0;
    const int from = forward ? e.v0 : e.v1;
    const int to = forward ? e.v1 : e.v0;
    if (!next.emplace(from, to).second)
      throw Error(Errc::MeshFailure, "boundary is not a simple closed curve");
  }
  if (next.empty()) throw Error(Errc::MeshFailure, "mesh has no boundary");
  const int start = next.begin()->first;
  int v = start;
  do {
    boundary_.push_back(v);
    auto it = next.find(v);
    if (it == next.end()) throw Error(Errc::MeshFailure, "boundary is not closed");
    v = it->second;
    if (boundary_.size() > next.size()) throw Error(Errc::MeshFailure, "boundary is not closed");
  } while (v != start);
  if (boundary_.size() != next.size())
    throw Error(Errc::MeshFailure, "domain boundary has several components (holes are unsupported)");
}

void TriangulationMesh::check_conformity() const {
  // No vertex may sit inside a triangle or on the interior of an edge it does
  // not belong to (hanging nodes).
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto tri = triangle_points(static_cast<int>(t));
    for (int v = 0; v < static_cast<int>(vertices_.size()); ++v) {
      const auto& idx = triangles_[t];
      if (v == idx[0] || v == idx[1] || v == idx[2]) continue;
      if (barycentric(tri, vertices_[v]).inside(1e-12))
        throw Error(Errc::MeshFailure, "non-conforming mesh: vertex " + std::to_string(v) +
                                           " touches triangle " + std::to_string(t));
    }
  }
  std::vector<Point2> outline;
  outline.reserve(boundary_.size());
  for (int v : boundary_) outline.push_back(vertices_[v]);
  const double enclosed = polygon_area(outline);
  if (std::abs(area() - enclosed) > 1e-10 * std::abs(enclosed))
    throw Error(Errc::MeshFailure, "triangles overlap or leave gaps");
}

std::array<Point2, 3> TriangulationMesh::triangle_points(int t) const {
  const auto& idx = triangles_[t];
  return {vertices_[idx[0]], vertices_[idx[1]], vertices_[idx[2]]};
}

double TriangulationMesh::triangle_area(int t) const {
  const auto p = triangle_points(t);
  return 0.5 * orient2d(p[0], p[1], p[2]);
}

double TriangulationMesh::area() const {
  double total = 0.0;
  for (std::size_t t = 0; t < triangles_.size(); ++t) total += triangle_area(static_cast<int>(t));
  return total;
}

std::optional<int> TriangulationMesh::locate(const Point2& p) const {
  constexpr double kTol = 1e-12;
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& box = boxes_[t];
    const double pad = kTol * std::max(box[1] - box[0], box[3] - box[2]);
    if (p.x < box[0] - pad || p.x > box[1] + pad || p.y < box[2] - pad || p.y > box[3] + pad)
      continue;
    if (barycentric(triangle_points(static_cast<int>(t)), p).inside(kTol)) return static_cast<int>(t);
  }
  return std::nullopt;
}

TriangulationMesh build_triangulation(std::span<const Point2> boundary_polygon,
                                      int target_triangle_count) {
  if (target_triangle_count < 1)
    throw Error(Errc::MeshFailure, "target triangle count must be positive");
  validate_polygon(boundary_polygon);

  std::vector<Point2> pts(boundary_polygon.begin(), boundary_polygon.end());
  if (polygon_area(pts) < 0.0) std::reverse(pts.begin(), pts.end());

  auto tris = ear_clip(pts);
  make_delaunay(pts, tris);
  const auto target = static_cast<std::size_t>(target_triangle_count);
  while (tris.size() < target) {
    bisect_largest(pts, tris);
    make_delaunay(pts, tris);
  }
  if (tris.size() > 2 * target)
    throw Error(Errc::MeshFailure, "polygon needs " + std::to_string(tris.size()) +
                                       " triangles, more than twice the target");
  return TriangulationMesh(std::move(pts), std::move(tris));
}

void to_json(nlohmann::json& j, const TriangulationMesh& mesh) {
  auto verts = nlohmann::json::array();
  for (const auto& p : mesh.vertices()) verts.push_back({p.x, p.y});
  auto tris = nlohmann::json::array();
  for (const auto& t : mesh.triangles()) tris.push_back({t[0], t[1], t[2]});
  j = nlohmann::json{{"vertices", std::move(verts)}, {"triangles", std::move(tris)}};
}

TriangulationMesh mesh_from_json(const nlohmann::json& j) {
  std::vector<Point2> verts;
  std::vector<Triangle> tris;
  try {
    for (const auto& v : j.at("vertices")) {
      if (v.size() != 2) throw Error(Errc::InvalidData, "mesh vertex must have 2 coordinates");
      verts.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    }
    for (const auto& t : j.at("triangles")) {
      if (t.size() != 3) throw Error(Errc::InvalidData, "mesh triangle must have 3 indices");
      tris.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidData, std::string("malformed mesh JSON: ") + e.what());
  }
  return TriangulationMesh(std::move(verts), std::move(tris));
}

}  // namespace fitr
