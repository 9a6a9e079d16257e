#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fitr/spline.hpp"

namespace fitr {

/// Spline coordinates of an image ensemble, one subject per row.
struct SmoothedEnsemble {
  SplineSpacePtr space;
  Eigen::MatrixXd coeffs;
  Eigen::VectorXd mean;  // column means removed when centered (zero otherwise)
  bool centered = false;

  int size() const { return static_cast<int>(coeffs.rows()); }
};

/// Smooths each row of `images` (n x N) with `smoother`; optionally
/// subtracts the column means of the coefficients.
SmoothedEnsemble smooth_ensemble(const Eigen::MatrixXd& images, const ImageSmoother& smoother, bool center);
SmoothedEnsemble smooth_ensemble(const Eigen::MatrixXd& images, SplineSpacePtr space,
                                 std::span<const Point2> grid_points, double penalty, bool center);

/// Wraps already-smoothed coefficients, centering them if requested.
SmoothedEnsemble make_ensemble(SplineSpacePtr space, Eigen::MatrixXd coeffs, bool center);

/// Eigen-decomposition of the pre-smoothed covariance K_n = H^{1/2} C H^{1/2}.
/// Column k of eigvecs() is phi_k; the k-th eigenfunction has spline
/// coordinates H^{-1/2} phi_k, returned by function_coeffs().
class FpcBasis {
 public:
  FpcBasis(SplineSpacePtr space, Eigen::VectorXd eigvals, Eigen::MatrixXd eigvecs, int k = 0);

  const SplineSpace& space() const { return *space_; }
  const SplineSpacePtr& space_ptr() const { return space_; }
  const Eigen::VectorXd& eigvals() const { return eigvals_; }
  const Eigen::MatrixXd& eigvecs() const { return eigvecs_; }
  /// Spline coordinates of every eigenfunction (columns).
  const Eigen::MatrixXd& function_coeffs() const { return function_coeffs_; }
  int available() const { return static_cast<int>(eigvals_.size()); }

  /// Selected basis count (0 when unset).
  int k() const { return k_; }
  FpcBasis with_k(int k) const;
  /// Same basis with the sign of eigenvector `index` reversed.
  FpcBasis with_flipped(int index) const;

  SplineFunction eigenfunction(int index) const;

  /// Scores <phi_k, f> for the first `count` eigenfunctions of every row of
  /// spline coordinates `coeffs` (n x m).
  Eigen::MatrixXd scores(const Eigen::MatrixXd& coeffs, int count) const;
  Eigen::MatrixXd scores(const SmoothedEnsemble& ens, int count) const;

 private:
  SplineSpacePtr space_;
  Eigen::VectorXd eigvals_;
  Eigen::MatrixXd eigvecs_;
  Eigen::MatrixXd function_coeffs_;
  Eigen::MatrixXd score_weights_;  // H^{1/2} phi
  int k_ = 0;
};

/// Throws Error(NonFiniteCovariance) for non-finite coefficients and
/// Error(InvalidConfig) for an uncentered ensemble.
FpcBasis compute_fpc(const SmoothedEnsemble& ens);

/// Smallest K whose leading eigenvalues explain at least `alpha` of the total.
/// Throws Error(AllZeroSpectrum).
int select_k_pve(std::span<const double> eigvals, double alpha);
int select_k_pve(const Eigen::VectorXd& eigvals, double alpha);

/// Smallest K whose leading lambda_k gamma_k^2 explain at least `alpha` of
/// their sum over all pre-fit components. Throws Error(ZeroAssociation).
int select_k_pave(std::span<const double> eigvals, std::span<const double> gamma_hat, double alpha);
int select_k_pave(const Eigen::VectorXd& eigvals, const Eigen::VectorXd& gamma_hat, double alpha);

nlohmann::json to_json(const FpcBasis& basis);
/// Throws Error(SpaceMismatch) if the stored fingerprint differs from `space`.
FpcBasis fpc_basis_from_json(SplineSpacePtr space, const nlohmann::json& j);

}  // namespace fitr
