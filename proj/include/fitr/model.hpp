#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fitr/fpc.hpp"
#include "fitr/geometry.hpp"
#include "fitr/spline.hpp"

namespace fitr {

/// Observed data: covariates (first column the intercept), binary treatment,
/// response and one image per subject on a shared grid.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi A;
  Eigen::VectorXd Y;
  Eigen::MatrixXd images;  // n x N, row i = subject i
  PixelGrid grid;

  int n() const { return static_cast<int>(Y.size()); }
  int q() const { return static_cast<int>(X.cols()); }

  /// Throws Error(InvalidData) on shape mismatch, non-finite values, a
  /// missing intercept, treatments outside {0,1} or a single treatment arm.
  void validate() const;
  Dataset subset(std::span<const int> rows) const;
};

enum class Criterion { PVE, PAVE, Fixed };

std::string_view criterion_name(Criterion c);
/// Accepts "pve", "pave" and "fixed" in any case.
Criterion parse_criterion(std::string_view name);

struct FitConfig {
  Criterion criterion = Criterion::PVE;
  double alpha = 0.99;
  double prefit_alpha = 0.99;  // PVE threshold of the PAVE pre-fit
  int k1 = 2;                  // used by Criterion::Fixed
  int k2 = 2;
};

struct FittedModel {
  Eigen::VectorXd alpha1, alpha2, gamma1, gamma2;
  FpcBasis basis1, basis2;        // channel 1 from Z, channel 2 from A Z; k() is the selected count
  Eigen::VectorXd mean1, mean2;   // ensemble means removed before the eigen-decomposition
  double residual_variance = 0.0;
  double condition_number = 0.0;
  Criterion criterion = Criterion::PVE;
  double alpha = 0.99;
  int prefit_k1 = 0, prefit_k2 = 0;  // PAVE pre-fit counts
  int n = 0;

  int k1() const { return basis1.k(); }
  int k2() const { return basis2.k(); }
  const SplineSpacePtr& space() const { return basis1.space_ptr(); }
  /// (alpha1, alpha2, gamma1, gamma2) stacked.
  Eigen::VectorXd theta() const;
};

/// Regression design (X, A X, U1, A U2) from uncentered spline coordinates.
Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXi& A, const Eigen::MatrixXd& coeffs,
                              const FpcBasis& basis1, const FpcBasis& basis2);

/// Least squares on fixed bases (their k() gives the counts). Throws
/// Error(SingularDesign) if the design condition number exceeds 1e12.
FittedModel fit_with_bases(const Eigen::MatrixXd& X, const Eigen::VectorXi& A, const Eigen::VectorXd& Y,
                           const Eigen::MatrixXd& coeffs, const FpcBasis& basis1, const FpcBasis& basis2,
                           const FitConfig& cfg);

/// Full fit from smoothed images (n x m spline coordinates): basis
/// construction for both channels, basis-count selection and least squares.
FittedModel fit_coefficients(const Eigen::MatrixXd& X, const Eigen::VectorXi& A, const Eigen::VectorXd& Y,
                             const Eigen::MatrixXd& coeffs, const SplineSpacePtr& space, const FitConfig& cfg);

FittedModel fit(const Dataset& data, const ImageSmoother& smoother, const FitConfig& cfg);
FittedModel fit(const Dataset& data, const SplineSpacePtr& space, const FitConfig& cfg, double penalty = 0.0);

/// beta_l = sum_k gamma_{l,k} phi_{l,k} for channel 1 or 2.
SplineFunction reconstruct_beta(const FittedModel& model, int channel);

struct Recommendation {
  int action = 0;
  double contrast = 0.0;
  std::array<double, 2> q_values{};  // Q at A = 0 and A = 1
};

/// Recommendation for a subject given by smoothed spline coordinates.
Recommendation recommend_coeffs(const FittedModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& coeffs);
/// Smooths `image` with `smoother` first. Throws Error(SpaceMismatch) when
/// the smoother's space differs from the model's.
Recommendation recommend(const FittedModel& model, const ImageSmoother& smoother, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& image);
std::vector<Recommendation> recommend_all(const FittedModel& model, const ImageSmoother& smoother,
                                          const Eigen::MatrixXd& X, const Eigen::MatrixXd& images);

/// The fitted contrast as a linear functional of raw pixels:
/// contrast(x, z) = alpha2' x + w' z.
struct ContrastRule {
  Eigen::VectorXd alpha2;
  Eigen::VectorXd pixel_weights;

  Eigen::VectorXd contrasts(const Eigen::MatrixXd& X, const Eigen::MatrixXd& images) const {
    return X * alpha2 + images * pixel_weights;
  }
  Eigen::VectorXi actions(const Eigen::MatrixXd& X, const Eigen::MatrixXd& images) const {
    return (contrasts(X, images).array() > 0.0).cast<int>();
  }
};
ContrastRule contrast_rule(const FittedModel& model, const ImageSmoother& smoother);

struct BootstrapConfig {
  int replicates = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct Interval {
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct BootstrapResult {
  std::vector<Interval> intervals;  // alpha1_1..alpha1_q, alpha2_1..alpha2_q
  int replicates = 0;
  int failures = 0;
};

/// Case-resampling percentile bootstrap for the scalar coefficients. Each
/// replicate rebuilds both bases. Throws Error(BootstrapFailure) if more
/// than 10% of replicates fail.
BootstrapResult bootstrap_ci(const Dataset& data, const ImageSmoother& smoother, const FitConfig& cfg,
                             const BootstrapConfig& boot);

/// Type-7 sample quantile of unsorted values.
double quantile(std::vector<double> values, double p);

}  // namespace fitr
