#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fitr/model.hpp"

namespace fitr {

/// The two image factors of the generator.
double z1_surface(const Point2& s);
double z2_surface(const Point2& s);

/// A coefficient map beta(s): a constant, or an arbitrary surface when
/// `surface` is set.
struct CoefficientMap {
  double constant = 1.0;
  std::function<double(const Point2&)> surface;

  double operator()(const Point2& s) const { return surface ? surface(s) : constant; }
};

struct SimConfig {
  int n = 500;
  int q = 5;
  double r = 0.0;
  int grid_side = 40;
  Eigen::VectorXd alpha1;  // empty means all ones
  Eigen::VectorXd alpha2;
  CoefficientMap beta1;
  CoefficientMap beta2;
  double noise_sd = 1.0;
  double treat_prob = 0.5;
  std::uint64_t seed = 1;

  /// Throws Error(InvalidConfig).
  void validate() const;
  Eigen::VectorXd alpha1_or_default() const;
  Eigen::VectorXd alpha2_or_default() const;
};

/// The true mean outcome alpha1'x + i1'zeta + a (alpha2'x + i2'zeta), where
/// i_l = (integral beta_l Z1, integral beta_l Z2) over the unit square.
struct TrueModel {
  Eigen::VectorXd alpha1, alpha2;
  Eigen::Vector2d i1, i2;

  Eigen::VectorXd contrast(const Eigen::MatrixXd& X, const Eigen::MatrixXd& zeta) const {
    return X * alpha2 + zeta * i2;
  }
  Eigen::VectorXd baseline(const Eigen::MatrixXd& X, const Eigen::MatrixXd& zeta) const {
    return X * alpha1 + zeta * i1;
  }
};

/// Integral of beta * Z_k over the unit square (closed form for constant maps).
double factor_integral(const CoefficientMap& beta, int factor);
TrueModel true_model(const SimConfig& cfg);

/// {Omega}_{l,l'} = r^{|l - l'|}.
Eigen::MatrixXd autoregressive_covariance(int dim, double r);

struct SimTruth {
  Eigen::MatrixXd zeta;        // n x 2
  Eigen::VectorXd contrast;    // true Q-contrast
  Eigen::VectorXi oracle_action;
  Eigen::VectorXd mean_outcome;  // noiseless E[Y | X, Z, A]
};

struct SimData {
  Dataset data;
  SimTruth truth;
};

/// Draws a data set: X = (1, Xtilde) with Xtilde ~ MVN(0, Omega_{q-1}(r)),
/// zeta ~ N(0, I2), A ~ Bernoulli(treat_prob), images zeta1 Z1 + zeta2 Z2 on
/// the cell-centered grid and Y from the true model plus N(0, noise_sd^2).
SimData generate(const SimConfig& cfg);

/// Fresh subjects for value estimation.
struct SubjectBatch {
  Eigen::MatrixXd X;
  Eigen::MatrixXd zeta;
  Eigen::MatrixXd images;
};

using Policy = std::function<Eigen::VectorXi(const SubjectBatch&)>;

Policy oracle_policy(const SimConfig& cfg);
Policy constant_policy(int action);
Policy model_policy(const FittedModel& model, const ImageSmoother& smoother);

/// Plug-in values E[mean outcome under each policy] over the same n_eval
/// fresh subjects. Throws Error(InvalidConfig) if n_eval < 1000.
std::vector<double> evaluate_values(const std::vector<Policy>& policies, const SimConfig& cfg, int n_eval,
                                    std::uint64_t seed);
double evaluate_value(const Policy& policy, const SimConfig& cfg, int n_eval, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct StudyConfig {
  SimConfig base;  // n, r and seed are overridden per setting and replicate
  std::vector<double> r_values{0.0, 0.5};
  std::vector<int> n_values{100, 200, 500};
  std::vector<Criterion> criteria{Criterion::PVE, Criterion::PAVE};
  int reps = 100;
  double alpha = 0.99;
  int triangles = 32;
  int degree = 5;
  int smoothness = 1;
  double penalty = 0.0;
  int n_eval = 10000;
  std::uint64_t seed = 2024;
  std::optional<std::filesystem::path> checkpoint_dir;
  bool resume = false;

  void validate() const;
  /// Fingerprint of every setting that affects results (checkpoints from a
  /// different configuration are never reused).
  std::string fingerprint() const;
};

struct CriterionOutcome {
  Criterion criterion = Criterion::PVE;
  double value = 0.0;
  Eigen::VectorXd alpha1, alpha2;
  int k1 = 0, k2 = 0;
};

struct RepOutcome {
  int setting = 0;
  int rep = 0;
  bool ok = false;
  std::string error;
  double value_opt = 0.0;
  std::vector<CriterionOutcome> fits;
};

struct StudyRow {
  double r = 0.0;
  int n = 0;
  Criterion criterion = Criterion::PVE;
  double value_opt = 0.0;
  double value_hat = 0.0;
  Eigen::VectorXd mse_alpha1, mse_alpha2;
  double mean_k1 = 0.0, mean_k2 = 0.0;
  int reps_ok = 0;
  int reps_failed = 0;
};

struct StudyReport {
  std::vector<StudyRow> rows;
  std::vector<RepOutcome> reps;
  int n_reps = 0;
  std::uint64_t seed = 0;

  const StudyRow& row(double r, int n, Criterion c) const;
};

/// Runs every (r, n) setting for `reps` replications and every criterion.
/// Throws Error(StudyFailure) if more than 5% of a setting's replications fail.
StudyReport run_study(const StudyConfig& cfg);

/// Single replication (exposed for tests and checkpoint plumbing).
RepOutcome run_replication(const StudyConfig& cfg, const ImageSmoother& smoother, int setting, int rep);

nlohmann::json to_json(const StudyReport& report);
nlohmann::json to_json(const RepOutcome& outcome);
RepOutcome rep_outcome_from_json(const nlohmann::json& j);
/// Value table: rows V(pi_opt) and V(pi_hat) per criterion, one column per (r, n).
std::string value_table_csv(const StudyReport& report);
/// MSE table: one line per (r, n, criterion) with MSEs x 1e-2.
std::string mse_table_csv(const StudyReport& report);

}  // namespace fitr
