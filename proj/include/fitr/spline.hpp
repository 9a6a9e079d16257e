#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <json.hpp>

#include "fitr/geometry.hpp"

namespace fitr {

// ---------------------------------------------------------------------------
// Bernstein-Bezier polynomials on a triangle

/// Multi-indices (i, j, k) with i + j + k = degree in descending lexicographic
/// order: (d,0,0), (d-1,1,0), (d-1,0,1), (d-2,2,0), ...
std::vector<std::array<int, 3>> bernstein_indices(int degree);

constexpr int bernstein_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

/// Position of (i, j, d - i - j) in bernstein_indices(d).
int bernstein_position(int degree, int i, int j);

/// All B^d_{ijk}(lambda) = d!/(i!j!k!) l1^i l2^j l3^k, in bernstein_indices order.
Eigen::VectorXd bernstein_eval(int degree, const BarycentricCoords& lambda);

/// Values and Cartesian first/second partial derivatives of every
/// Bernstein polynomial of a triangle.
struct BernsteinJet {
  Eigen::VectorXd value, dx, dy, dxx, dxy, dyy;
};
BernsteinJet bernstein_jet(int degree, const std::array<Point2, 3>& tri, const BarycentricCoords& lambda);

/// Exact per-triangle mass matrix: integral over T of B_a * B_b.
Eigen::MatrixXd bernstein_mass_matrix(int degree, double area);

/// Rows of A such that A c = 0 iff the piecewise polynomial with raw
/// Bernstein coefficients c is C^smoothness across every interior edge.
/// Coefficients are ordered triangle by triangle.
Eigen::SparseMatrix<double> smoothness_constraints(const TriangulationMesh& mesh, int degree,
                                                   int smoothness);

// ---------------------------------------------------------------------------

/// The spline space S^r_d over a triangulation, expressed through an
/// orthonormal basis Q of the smoothness-constraint null space. A function
/// with constrained coordinates c has raw Bernstein coefficients Q c.
class SplineSpace {
 public:
  /// Throws Error(RankDeficientSpace) when the constraints leave no freedom.
  static std::shared_ptr<const SplineSpace> build(TriangulationMesh mesh, int degree, int smoothness);

  const TriangulationMesh& mesh() const { return mesh_; }
  int degree() const { return degree_; }
  int smoothness() const { return smoothness_; }
  int basis_per_triangle() const { return bernstein_count(degree_); }
  int raw_dim() const { return static_cast<int>(nullspace_.rows()); }
  int dim() const { return static_cast<int>(nullspace_.cols()); }

  const Eigen::MatrixXd& nullspace() const { return nullspace_; }
  /// H = Q^T M Q, the L2 Gram matrix of the constrained basis.
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::MatrixXd& gram_sqrt() const { return gram_sqrt_; }
  const Eigen::MatrixXd& gram_inv_sqrt() const { return gram_inv_sqrt_; }
  /// Thin-plate energy matrix in constrained coordinates.
  const Eigen::MatrixXd& roughness() const { return roughness_; }
  /// Fingerprint of mesh, degree and smoothness.
  const std::string& hash() const { return hash_; }

  /// Constrained basis B_Q(p) (length dim()); zero vector outside the domain.
  Eigen::VectorXd basis_at(const Point2& p) const;
  /// Raw coefficients (length raw_dim()) of constrained coordinates.
  Eigen::VectorXd to_raw(const Eigen::VectorXd& coeffs) const { return nullspace_ * coeffs; }

 private:
  SplineSpace(TriangulationMesh mesh, int degree, int smoothness);

  TriangulationMesh mesh_;
  int degree_;
  int smoothness_;
  Eigen::MatrixXd nullspace_;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd gram_sqrt_;
  Eigen::MatrixXd gram_inv_sqrt_;
  Eigen::MatrixXd roughness_;
  std::string hash_;
};

using SplineSpacePtr = std::shared_ptr<const SplineSpace>;

/// Stable fingerprint of a mesh together with spline degree and smoothness.
std::string space_fingerprint(const TriangulationMesh& mesh, int degree, int smoothness);

/// Element of a SplineSpace; zero outside the domain.
class SplineFunction {
 public:
  SplineFunction(SplineSpacePtr space, Eigen::VectorXd coeffs);

  static SplineFunction zero(SplineSpacePtr space);

  double operator()(const Point2& p) const;
  Eigen::VectorXd operator()(std::span<const Point2> points) const;

  /// Value and gradient of the polynomial piece of triangle t at p (the piece
  /// is extended beyond its triangle if p lies outside).
  struct Local {
    double value, dx, dy;
  };
  Local on_triangle(int t, const Point2& p) const;

  /// L2 inner product over the domain, exact through the Gram matrix.
  double inner(const SplineFunction& other) const;

  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  const SplineSpace& space() const { return *space_; }
  const SplineSpacePtr& space_ptr() const { return space_; }

 private:
  SplineSpacePtr space_;
  Eigen::VectorXd coeffs_;
  Eigen::VectorXd raw_;
};

inline double eval(const SplineFunction& fn, const Point2& p) { return fn(p); }

nlohmann::json to_json(const SplineFunction& fn);
/// Throws Error(SpaceMismatch) when the stored fingerprint differs from `space`.
SplineFunction spline_function_from_json(SplineSpacePtr space, const nlohmann::json& j);

// ---------------------------------------------------------------------------

/// Penalised least-squares projection of images sampled on a fixed set of
/// points into a spline space. The factorisation is computed once; fitting
/// many images is a matrix product.
class ImageSmoother {
 public:
  /// Throws Error(UnderdeterminedFit) if the penalised design is rank deficient.
  ImageSmoother(SplineSpacePtr space, std::vector<Point2> points, double penalty = 0.0);

  /// Spline coordinates of one image (values aligned with points()).
  Eigen::VectorXd fit(const Eigen::VectorXd& values) const;
  /// Row i of the result holds the coordinates of row i of `images`.
  Eigen::MatrixXd fit_rows(const Eigen::MatrixXd& images) const;
  SplineFunction fit_function(const Eigen::VectorXd& values) const;

  /// Residual sum of squares over in-domain points.
  double residual_ss(const Eigen::VectorXd& values, const Eigen::VectorXd& coeffs) const;
  /// Trace of the hat matrix (effective degrees of freedom).
  double hat_trace() const { return hat_trace_; }

  /// m x N operator mapping image values to spline coordinates; columns of
  /// points outside the domain are zero.
  const Eigen::MatrixXd& projection() const { return projection_; }
  /// Basis values at in-domain points (rows follow inside_indices()).
  const Eigen::MatrixXd& design() const { return design_; }
  const std::vector<int>& inside_indices() const { return inside_; }

  const std::vector<Point2>& points() const { return points_; }
  double penalty() const { return penalty_; }
  const SplineSpacePtr& space_ptr() const { return space_; }
  const SplineSpace& space() const { return *space_; }

 private:
  SplineSpacePtr space_;
  std::vector<Point2> points_;
  double penalty_;
  std::vector<int> inside_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd projection_;
  double hat_trace_ = 0.0;
};

/// One-off smoothing of a single image.
SplineFunction fit_image(SplineSpacePtr space, std::span<const Point2> grid_points,
                         const Eigen::VectorXd& values, double penalty);

/// Penalty minimising the generalised cross-validation score summed over the
/// rows of `images`. Ties resolve to the earliest candidate.
double select_penalty_gcv(SplineSpacePtr space, std::span<const Point2> grid_points,
                          const Eigen::MatrixXd& images, std::span<const double> candidates);

}  // namespace fitr
