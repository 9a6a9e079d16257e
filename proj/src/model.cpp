#include "fitr/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "fitr/errors.hpp"
#include "fitr/rng.hpp"

namespace fitr {

namespace {

constexpr double kMaxCondition = 1e12;

Eigen::MatrixXd treated_rows(const Eigen::VectorXi& A, const Eigen::MatrixXd& m) {
  return A.cast<double>().asDiagonal() * m;
}

}  // namespace

// ---------------------------------------------------------------------------

void Dataset::validate() const {
  const auto rows = Y.size();
  if (rows < 1) throw Error(Errc::InvalidData, "dataset is empty");
  if (X.rows() != rows || A.size() != rows || images.rows() != rows)
    throw Error(Errc::InvalidData, "X, A, Y and images must have one row per subject");
  if (X.cols() < 1) throw Error(Errc::InvalidData, "at least one covariate (the intercept) is required");
  if (images.cols() != static_cast<Eigen::Index>(grid.size()))
    throw Error(Errc::InvalidData, "image width does not match the pixel grid");
  if (!X.allFinite() || !Y.allFinite() || !images.allFinite())
    throw Error(Errc::InvalidData, "dataset contains missing or non-finite values");
  if ((X.col(0).array() != 1.0).any()) throw Error(Errc::InvalidData, "first covariate column must be the intercept (all 1)");
  int treated = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (A[i] != 0 && A[i] != 1) throw Error(Errc::InvalidData, "treatment must be coded 0 or 1");
    treated += A[i];
  }
  if (treated == 0 || treated == rows)
    throw Error(Errc::InvalidData, "positivity violated: both treatment arms must be present");
}

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  const auto n_out = static_cast<Eigen::Index>(rows.size());
  out.X.resize(n_out, X.cols());
  out.A.resize(n_out);
  out.Y.resize(n_out);
  out.images.resize(n_out, images.cols());
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    out.X.row(i) = X.row(r);
    out.A[i] = A[r];
    out.Y[i] = Y[r];
    out.images.row(i) = images.row(r);
  }
  out.grid = grid;
  return out;
}

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::PVE: return "PVE";
    case Criterion::PAVE: return "PAVE";
    case Criterion::Fixed: return "fixed";
  }
  return "unknown";
}

Criterion parse_criterion(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "pve") return Criterion::PVE;
  if (lower == "pave") return Criterion::PAVE;
  if (lower == "fixed") return Criterion::Fixed;
  throw Error(Errc::InvalidConfig, "unknown selection criterion '" + std::string(name) + "'");
}

Eigen::VectorXd FittedModel::theta() const {
  Eigen::VectorXd t(alpha1.size() + alpha2.size() + gamma1.size() + gamma2.size());
  t << alpha1, alpha2, gamma1, gamma2;
  return t;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXi& A, const Eigen::MatrixXd& coeffs,
                              const FpcBasis& basis1, const FpcBasis& basis2) {
  const Eigen::Index n = X.rows();
  const Eigen::Index q = X.cols();
  const int k1 = basis1.k();
  const int k2 = basis2.k();
  Eigen::MatrixXd w(n, 2 * q + k1 + k2);
  w.leftCols(q) = X;
  w.middleCols(q, q) = treated_rows(A, X);
  w.middleCols(2 * q, k1) = basis1.scores(coeffs, k1);
  // A (A Z) = A Z, so the second channel's scores are those of Z on treated rows.
  w.rightCols(k2) = treated_rows(A, basis2.scores(coeffs, k2));
  return w;
}

FittedModel fit_with_bases(const Eigen::MatrixXd& X, const Eigen::VectorXi& A, const Eigen::VectorXd& Y,
                           const Eigen::MatrixXd& coeffs, const FpcBasis& basis1, const FpcBasis& basis2,
                           const FitConfig& cfg) {
  const int k1 = basis1.k();
  const int k2 = basis2.k();
  if (k1 < 1 || k2 < 1) throw Error(Errc::SelectionFailure, "both channels need at least one basis function");
  const Eigen::Index n = X.rows();
  const Eigen::Index q = X.cols();
  const Eigen::Index p = 2 * q + k1 + k2;
  if (n <= p) throw Error(Errc::SingularDesign, "fewer subjects than regression coefficients");

  const Eigen::MatrixXd w = design_matrix(X, A, coeffs, basis1, basis2);
  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(
      w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv[p - 1] > 0.0 ? sv[0] / sv[p - 1] : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxCondition))
    throw Error(Errc::SingularDesign, "design condition number " + std::to_string(cond) + " exceeds 1e12");
  const Eigen::VectorXd theta = svd.matrixV() * (sv.cwiseInverse().asDiagonal() * (svd.matrixU().transpose() * Y));
  const double rss = (Y - w * theta).squaredNorm();

  FittedModel model{
      .alpha1 = theta.head(q),
      .alpha2 = theta.segment(q, q),
      .gamma1 = theta.segment(2 * q, k1),
      .gamma2 = theta.tail(k2),
      .basis1 = basis1,
      .basis2 = basis2,
      .mean1 = Eigen::VectorXd::Zero(coeffs.cols()),
      .mean2 = Eigen::VectorXd::Zero(coeffs.cols()),
      .residual_variance = rss / static_cast<double>(n - p),
      .condition_number = cond,
      .criterion = cfg.criterion,
      .alpha = cfg.alpha,
      .n = static_cast<int>(n),
  };
  if (!model.theta().allFinite()) throw Error(Errc::SingularDesign, "non-finite regression coefficients");
  return model;
}

FittedModel fit_coefficients(const Eigen::MatrixXd& X, const Eigen::VectorXi& A, const Eigen::VectorXd& Y,
                             const Eigen::MatrixXd& coeffs, const SplineSpacePtr& space, const FitConfig& cfg) {
  const SmoothedEnsemble ens1 = make_ensemble(space, coeffs, true);
  const SmoothedEnsemble ens2 = make_ensemble(space, treated_rows(A, coeffs), true);
  const FpcBasis basis1 = compute_fpc(ens1);
  const FpcBasis basis2 = compute_fpc(ens2);

  int k1 = 0, k2 = 0, pre1 = 0, pre2 = 0;
  switch (cfg.criterion) {
    case Criterion::Fixed:
      k1 = cfg.k1;
      k2 = cfg.k2;
      if (k1 < 1 || k2 < 1 || k1 > basis1.available() || k2 > basis2.available())
        throw Error(Errc::SelectionFailure, "fixed basis counts out of range");
      break;
    case Criterion::PVE:
      k1 = select_k_pve(basis1.eigvals(), cfg.alpha);
      k2 = select_k_pve(basis2.eigvals(), cfg.alpha);
      break;
    case Criterion::PAVE: {
      pre1 = select_k_pve(basis1.eigvals(), cfg.prefit_alpha);
      pre2 = select_k_pve(basis2.eigvals(), cfg.prefit_alpha);
      const FittedModel prefit = fit_with_bases(X, A, Y, coeffs, basis1.with_k(pre1), basis2.with_k(pre2), cfg);
      k1 = select_k_pave(basis1.eigvals(), prefit.gamma1, cfg.alpha);
      k2 = select_k_pave(basis2.eigvals(), prefit.gamma2, cfg.alpha);
      break;
    }
  }
  FittedModel model = fit_with_bases(X, A, Y, coeffs, basis1.with_k(k1), basis2.with_k(k2), cfg);
  model.mean1 = ens1.mean;
  model.mean2 = ens2.mean;
  model.prefit_k1 = pre1;
  model.prefit_k2 = pre2;
  return model;
}

FittedModel fit(const Dataset& data, const ImageSmoother& smoother, const FitConfig& cfg) {
  data.validate();
  if (smoother.points().size() != data.grid.size())
    throw Error(Errc::InvalidData, "smoother grid does not match the dataset grid");
  return fit_coefficients(data.X, data.A, data.Y, smoother.fit_rows(data.images), smoother.space_ptr(), cfg);
}

FittedModel fit(const Dataset& data, const SplineSpacePtr& space, const FitConfig& cfg, double penalty) {
  const ImageSmoother smoother(space, data.grid.points, penalty);
  return fit(data, smoother, cfg);
}

SplineFunction reconstruct_beta(const FittedModel& model, int channel) {
  if (channel != 1 && channel != 2) throw Error(Errc::InvalidConfig, "channel must be 1 or 2");
  const FpcBasis& basis = channel == 1 ? model.basis1 : model.basis2;
  const Eigen::VectorXd& gamma = channel == 1 ? model.gamma1 : model.gamma2;
  return SplineFunction(basis.space_ptr(), basis.function_coeffs().leftCols(basis.k()) * gamma);
}

// ---------------------------------------------------------------------------

Recommendation recommend_coeffs(const FittedModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& coeffs) {
  if (x.size() != model.alpha1.size()) throw Error(Errc::InvalidData, "covariate vector has the wrong length");
  const Eigen::MatrixXd row = coeffs.transpose();
  const double q0 = model.alpha1.dot(x) + (model.basis1.scores(row, model.k1()) * model.gamma1)(0);
  const double contrast = model.alpha2.dot(x) + (model.basis2.scores(row, model.k2()) * model.gamma2)(0);
  return {contrast > 0.0 ? 1 : 0, contrast, {q0, q0 + contrast}};
}

Recommendation recommend(const FittedModel& model, const ImageSmoother& smoother, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& image) {
  if (smoother.space().hash() != model.space()->hash())
    throw Error(Errc::SpaceMismatch, "image smoother and model use different spline spaces");
  return recommend_coeffs(model, x, smoother.fit(image));
}

std::vector<Recommendation> recommend_all(const FittedModel& model, const ImageSmoother& smoother,
                                          const Eigen::MatrixXd& X, const Eigen::MatrixXd& images) {
  if (smoother.space().hash() != model.space()->hash())
    throw Error(Errc::SpaceMismatch, "image smoother and model use different spline spaces");
  if (X.rows() != images.rows()) throw Error(Errc::InvalidData, "covariate and image row counts differ");
  const Eigen::MatrixXd coeffs = smoother.fit_rows(images);
  std::vector<Recommendation> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    out.push_back(recommend_coeffs(model, X.row(i).transpose(), coeffs.row(i).transpose()));
  return out;
}

ContrastRule contrast_rule(const FittedModel& model, const ImageSmoother& smoother) {
  if (smoother.space().hash() != model.space()->hash())
    throw Error(Errc::SpaceMismatch, "image smoother and model use different spline spaces");
  const SplineFunction beta2 = reconstruct_beta(model, 2);
  const Eigen::VectorXd functional = model.space()->gram() * beta2.coeffs();
  return {model.alpha2, smoother.projection().transpose() * functional};
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(Errc::InvalidData, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_ci(const Dataset& data, const ImageSmoother& smoother, const FitConfig& cfg,
                             const BootstrapConfig& boot) {
  if (boot.replicates < 100) throw Error(Errc::InvalidConfig, "bootstrap needs at least 100 replicates");
  if (!(boot.level > 0.0 && boot.level < 1.0)) throw Error(Errc::InvalidConfig, "confidence level must lie in (0, 1)");
  data.validate();
  const Eigen::MatrixXd coeffs = smoother.fit_rows(data.images);
  const FittedModel full = fit_coefficients(data.X, data.A, data.Y, coeffs, smoother.space_ptr(), cfg);

  const int n = data.n();
  const auto q = static_cast<std::size_t>(data.q());
  std::vector<std::vector<double>> draws(2 * q);
  int failures = 0;
  Eigen::MatrixXd xb(n, data.q()), cb(n, coeffs.cols());
  Eigen::VectorXi ab(n);
  Eigen::VectorXd yb(n);
  for (int b = 0; b < boot.replicates; ++b) {
    Rng rng = Rng::stream(boot.seed, static_cast<std::uint64_t>(b));
    for (int i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      xb.row(i) = data.X.row(r);
      ab[i] = data.A[r];
      yb[i] = data.Y[r];
      cb.row(i) = coeffs.row(r);
    }
    try {
      const FittedModel m = fit_coefficients(xb, ab, yb, cb, smoother.space_ptr(), cfg);
      for (std::size_t j = 0; j < q; ++j) {
        draws[j].push_back(m.alpha1[static_cast<Eigen::Index>(j)]);
        draws[q + j].push_back(m.alpha2[static_cast<Eigen::Index>(j)]);
      }
    } catch (const Error&) {
      ++failures;
    }
  }
  if (failures * 10 > boot.replicates)
    throw Error(Errc::BootstrapFailure,
                std::to_string(failures) + " of " + std::to_string(boot.replicates) + " bootstrap replicates failed");

  BootstrapResult result{{}, boot.replicates, failures};
  const double lo = (1.0 - boot.level) / 2.0;
  const double hi = (1.0 + boot.level) / 2.0;
  for (std::size_t j = 0; j < 2 * q; ++j) {
    const bool first = j < q;
    const std::size_t idx = first ? j : j - q;
    const double est = (first ? full.alpha1 : full.alpha2)[static_cast<Eigen::Index>(idx)];
    result.intervals.push_back({(first ? "alpha1_" : "alpha2_") + std::to_string(idx + 1), est,
                                quantile(draws[j], lo), quantile(draws[j], hi)});
  }
  return result;
}

}  // namespace fitr
