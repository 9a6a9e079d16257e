#pragma once

#include <array>
#include <vector>

#include "fitr/geometry.hpp"

namespace fitr {

/// Quadrature node on the reference simplex, in barycentric coordinates.
struct TriangleNode {
  BarycentricCoords point;
  double weight = 0.0;  // weights sum to 1 (multiply by the triangle area)
};

/// Collapsed Gauss-Legendre rule on a triangle, exact for polynomials of
/// total degree <= `degree`.
std::vector<TriangleNode> triangle_rule(int degree);

}  // namespace fitr
