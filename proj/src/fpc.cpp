#include "fitr/fpc.hpp"

#include <cmath>

#include "fitr/errors.hpp"

namespace fitr {

namespace {

constexpr double kClipTolerance = 1e-10;
constexpr double kSelectTolerance = 1e-12;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidConfig, "selection threshold must lie in (0, 1]");
}

// Smallest K with cumulative(K) >= alpha * total, compared with a relative
// tolerance so that exact decimal thresholds are honoured.
int smallest_reaching(std::span<const double> weights, double alpha) {
  double total = 0.0;
  for (double w : weights) total += w;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    cumulative += weights[k];
    if (cumulative >= alpha * total * (1.0 - kSelectTolerance)) return static_cast<int>(k) + 1;
  }
  return static_cast<int>(weights.size());
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

SmoothedEnsemble make_ensemble(SplineSpacePtr space, Eigen::MatrixXd coeffs, bool center) {
  if (coeffs.cols() != space->dim())
    throw Error(Errc::SpaceMismatch, "ensemble coefficients do not match the spline space dimension");
  SmoothedEnsemble ens{std::move(space), std::move(coeffs), Eigen::VectorXd::Zero(0), center};
  ens.mean = Eigen::VectorXd::Zero(ens.coeffs.cols());
  if (center && ens.coeffs.rows() > 0) {
    ens.mean = ens.coeffs.colwise().mean().transpose();
    ens.coeffs.rowwise() -= ens.mean.transpose();
  }
  return ens;
}

SmoothedEnsemble smooth_ensemble(const Eigen::MatrixXd& images, const ImageSmoother& smoother, bool center) {
  return make_ensemble(smoother.space_ptr(), smoother.fit_rows(images), center);
}

SmoothedEnsemble smooth_ensemble(const Eigen::MatrixXd& images, SplineSpacePtr space,
                                 std::span<const Point2> grid_points, double penalty, bool center) {
  const ImageSmoother smoother(std::move(space), {grid_points.begin(), grid_points.end()}, penalty);
  return smooth_ensemble(images, smoother, center);
}

FpcBasis::FpcBasis(SplineSpacePtr space, Eigen::VectorXd eigvals, Eigen::MatrixXd eigvecs, int k)
    : space_(std::move(space)), eigvals_(std::move(eigvals)), eigvecs_(std::move(eigvecs)), k_(k) {
  if (eigvecs_.rows() != space_->dim() || eigvecs_.cols() != eigvals_.size())
    throw Error(Errc::SpaceMismatch, "eigenvector matrix does not match the spline space dimension");
  if (k_ < 0 || k_ > available()) throw Error(Errc::InvalidConfig, "basis count exceeds available eigenpairs");
  function_coeffs_ = space_->gram_inv_sqrt() * eigvecs_;
  score_weights_ = space_->gram_sqrt() * eigvecs_;
}

FpcBasis FpcBasis::with_k(int k) const { return FpcBasis(space_, eigvals_, eigvecs_, k); }

FpcBasis FpcBasis::with_flipped(int index) const {
  Eigen::MatrixXd v = eigvecs_;
  v.col(index) = -v.col(index);
  return FpcBasis(space_, eigvals_, std::move(v), k_);
}

SplineFunction FpcBasis::eigenfunction(int index) const {
  if (index < 0 || index >= available()) throw Error(Errc::InvalidConfig, "eigenfunction index out of range");
  return SplineFunction(space_, function_coeffs_.col(index));
}

Eigen::MatrixXd FpcBasis::scores(const Eigen::MatrixXd& coeffs, int count) const {
  if (count < 0 || count > available()) throw Error(Errc::InvalidConfig, "score count exceeds available eigenpairs");
  if (coeffs.cols() != space_->dim())
    throw Error(Errc::SpaceMismatch, "coefficients do not match the basis spline space");
  return coeffs * score_weights_.leftCols(count);
}

Eigen::MatrixXd FpcBasis::scores(const SmoothedEnsemble& ens, int count) const {
  if (ens.space->hash() != space_->hash())
    throw Error(Errc::SpaceMismatch, "ensemble and basis use different spline spaces");
  return scores(ens.coeffs, count);
}

FpcBasis compute_fpc(const SmoothedEnsemble& ens) {
  if (!ens.centered) throw Error(Errc::InvalidConfig, "principal components need a centered ensemble");
  if (ens.coeffs.rows() < 1) throw Error(Errc::InvalidData, "empty ensemble");
  if (!ens.coeffs.allFinite()) throw Error(Errc::NonFiniteCovariance, "ensemble coefficients are not finite");
  const SplineSpace& space = *ens.space;
  const Eigen::MatrixXd g = ens.coeffs * space.gram_sqrt();
  Eigen::MatrixXd kn = (g.transpose() * g) / static_cast<double>(ens.coeffs.rows());
  kn = 0.5 * (kn + kn.transpose());
  if (!kn.allFinite()) throw Error(Errc::NonFiniteCovariance, "covariance matrix is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kn);
  if (eig.info() != Eigen::Success) throw Error(Errc::NonFiniteCovariance, "eigen-decomposition failed");
  const Eigen::Index m = kn.rows();
  Eigen::VectorXd vals(m);
  Eigen::MatrixXd vecs(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    // Ascending order from the solver; reverse it.
    double lambda = eig.eigenvalues()[m - 1 - k];
    if (lambda < 0.0 && lambda >= -kClipTolerance) lambda = 0.0;
    vals[k] = lambda;
    Eigen::VectorXd v = eig.eigenvectors().col(m - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    vecs.col(k) = v;
  }
  return FpcBasis(ens.space, std::move(vals), std::move(vecs));
}

int select_k_pve(std::span<const double> eigvals, double alpha) {
  check_alpha(alpha);
  std::vector<double> w(eigvals.begin(), eigvals.end());
  double total = 0.0;
  for (double& v : w) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteCovariance, "non-finite eigenvalue");
    v = std::max(v, 0.0);
    total += v;
  }
  if (!(total > 0.0)) throw Error(Errc::AllZeroSpectrum, "all eigenvalues are zero");
  return smallest_reaching(w, alpha);
}

int select_k_pve(const Eigen::VectorXd& eigvals, double alpha) { return select_k_pve(to_vector(eigvals), alpha); }

int select_k_pave(std::span<const double> eigvals, std::span<const double> gamma_hat, double alpha) {
  check_alpha(alpha);
  if (gamma_hat.empty() || eigvals.size() < gamma_hat.size())
    throw Error(Errc::SelectionFailure, "pre-fit coefficients exceed the available eigenvalues");
  std::vector<double> w(gamma_hat.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::max(eigvals[k], 0.0) * gamma_hat[k] * gamma_hat[k];
    if (!std::isfinite(w[k])) throw Error(Errc::SelectionFailure, "non-finite association weight");
    total += w[k];
  }
  if (!(total > 0.0)) throw Error(Errc::ZeroAssociation, "no component is associated with the response");
  return smallest_reaching(w, alpha);
}

int select_k_pave(const Eigen::VectorXd& eigvals, const Eigen::VectorXd& gamma_hat, double alpha) {
  return select_k_pave(to_vector(eigvals), to_vector(gamma_hat), alpha);
}

nlohmann::json to_json(const FpcBasis& basis) {
  nlohmann::json vecs = nlohmann::json::array();
  for (Eigen::Index k = 0; k < basis.eigvecs().cols(); ++k) vecs.push_back(to_vector(basis.eigvecs().col(k)));
  return {{"space_hash", basis.space().hash()},
          {"K", basis.k()},
          {"eigvals", to_vector(basis.eigvals())},
          {"eigvecs", std::move(vecs)}};
}

FpcBasis fpc_basis_from_json(SplineSpacePtr space, const nlohmann::json& j) {
  try {
    const auto hash = j.at("space_hash").get<std::string>();
    if (hash != space->hash())
      throw Error(Errc::SpaceMismatch, "basis was built for space " + hash + ", not " + space->hash());
    const auto vals = j.at("eigvals").get<std::vector<double>>();
    const auto cols = j.at("eigvecs").get<std::vector<std::vector<double>>>();
    if (cols.size() != vals.size()) throw Error(Errc::InvalidData, "eigenvalue and eigenvector counts differ");
    Eigen::MatrixXd vecs(space->dim(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (static_cast<Eigen::Index>(cols[k].size()) != space->dim())
        throw Error(Errc::SpaceMismatch, "eigenvector length does not match the spline space");
      vecs.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(cols[k].data(), space->dim());
    }
    return FpcBasis(std::move(space), Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())),
                    std::move(vecs), j.at("K").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidData, std::string("malformed basis JSON: ") + e.what());
  }
}

}  // namespace fitr
