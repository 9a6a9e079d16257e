#include "fitr/sim.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

#include "fitr/errors.hpp"
#include "fitr/format.hpp"
#include "fitr/rng.hpp"

namespace fitr {

namespace {

constexpr int kEvalChunk = 1000;

double squared_radius(const Point2& s) {
  const double a = s.x - 0.5;
  const double b = s.y - 0.5;
  return a * a + b * b;
}

// 2 x N matrix of both factors at the grid points.
Eigen::MatrixXd factor_matrix(const PixelGrid& grid) {
  Eigen::MatrixXd f(2, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    f(0, static_cast<Eigen::Index>(j)) = z1_surface(grid.points[j]);
    f(1, static_cast<Eigen::Index>(j)) = z2_surface(grid.points[j]);
  }
  return f;
}

// Rows (1, L z) with z standard normal.
void draw_covariates(Rng& rng, const Eigen::MatrixXd& chol, Eigen::MatrixXd& X, Eigen::Index i) {
  const Eigen::Index d = chol.rows();
  Eigen::VectorXd z(d);
  for (Eigen::Index k = 0; k < d; ++k) z[k] = rng.normal();
  X(i, 0) = 1.0;
  if (d > 0) X.row(i).tail(d) = (chol * z).transpose();
}

Eigen::MatrixXd covariate_factor(const SimConfig& cfg) {
  if (cfg.q <= 1) return Eigen::MatrixXd(0, 0);
  const Eigen::LLT<Eigen::MatrixXd> llt(autoregressive_covariance(cfg.q - 1, cfg.r));
  if (llt.info() != Eigen::Success) throw Error(Errc::InvalidConfig, "covariate covariance is not positive definite");
  return llt.matrixL();
}

std::uint64_t replication_seed(std::uint64_t seed, int setting, int rep) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(setting) << 32) | static_cast<std::uint32_t>(rep)));
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

double z1_surface(const Point2& s) { return 20.0 * squared_radius(s); }

double z2_surface(const Point2& s) { return std::exp(-15.0 * squared_radius(s)); }

double factor_integral(const CoefficientMap& beta, int factor) {
  if (factor != 1 && factor != 2) throw Error(Errc::InvalidConfig, "factor index must be 1 or 2");
  if (!beta.surface) {
    if (factor == 1) return beta.constant * 10.0 / 3.0;
    const double one_d = std::sqrt(std::numbers::pi / 15.0) * std::erf(std::sqrt(15.0) / 2.0);
    return beta.constant * one_d * one_d;
  }
  // Tensor Gauss-Legendre on an 8 x 8 partition of the unit square.
  using Rule = boost::math::quadrature::gauss<double, 20>;
  constexpr int cells = 8;
  const double h = 1.0 / cells;
  double total = 0.0;
  for (int a = 0; a < cells; ++a) {
    for (int b = 0; b < cells; ++b) {
      const double x0 = a * h, y0 = b * h;
      total += Rule::integrate(
          [&](double u) {
            return Rule::integrate(
                [&](double v) {
                  const Point2 s{x0 + 0.5 * h * (u + 1.0), y0 + 0.5 * h * (v + 1.0)};
                  return beta(s) * (factor == 1 ? z1_surface(s) : z2_surface(s));
                },
                -1.0, 1.0);
          },
          -1.0, 1.0);
    }
  }
  return total * 0.25 * h * h;
}

Eigen::MatrixXd autoregressive_covariance(int dim, double r) {
  Eigen::MatrixXd omega(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) omega(a, b) = std::pow(r, std::abs(a - b));
  return omega;
}

void SimConfig::validate() const {
  if (n < 2) throw Error(Errc::InvalidConfig, "n must be at least 2");
  if (q < 1) throw Error(Errc::InvalidConfig, "q must be at least 1");
  if (!(r > -1.0 && r < 1.0)) throw Error(Errc::InvalidConfig, "r must lie in (-1, 1)");
  if (grid_side < 2) throw Error(Errc::InvalidConfig, "grid_side must be at least 2");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw Error(Errc::InvalidConfig, "noise_sd must be >= 0");
  if (!(treat_prob > 0.0 && treat_prob < 1.0)) throw Error(Errc::InvalidConfig, "treat_prob must lie in (0, 1)");
  if (alpha1.size() != 0 && alpha1.size() != q) throw Error(Errc::InvalidConfig, "alpha1 must have q entries");
  if (alpha2.size() != 0 && alpha2.size() != q) throw Error(Errc::InvalidConfig, "alpha2 must have q entries");
}

Eigen::VectorXd SimConfig::alpha1_or_default() const {
  return alpha1.size() == 0 ? Eigen::VectorXd::Ones(q) : alpha1;
}

Eigen::VectorXd SimConfig::alpha2_or_default() const {
  return alpha2.size() == 0 ? Eigen::VectorXd::Ones(q) : alpha2;
}

TrueModel true_model(const SimConfig& cfg) {
  return {cfg.alpha1_or_default(), cfg.alpha2_or_default(),
          Eigen::Vector2d(factor_integral(cfg.beta1, 1), factor_integral(cfg.beta1, 2)),
          Eigen::Vector2d(factor_integral(cfg.beta2, 1), factor_integral(cfg.beta2, 2))};
}

SimData generate(const SimConfig& cfg) {
  cfg.validate();
  const TrueModel truth = true_model(cfg);
  const Eigen::MatrixXd chol = covariate_factor(cfg);
  const PixelGrid grid = PixelGrid::unit_square(cfg.grid_side);
  Rng rng(cfg.seed);

  SimData out;
  Dataset& d = out.data;
  d.X.resize(cfg.n, cfg.q);
  d.A.resize(cfg.n);
  d.Y.resize(cfg.n);
  Eigen::MatrixXd zeta(cfg.n, 2);
  Eigen::VectorXd noise(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    draw_covariates(rng, chol, d.X, i);
    zeta(i, 0) = rng.normal();
    zeta(i, 1) = rng.normal();
    d.A[i] = rng.bernoulli(cfg.treat_prob) ? 1 : 0;
    noise[i] = cfg.noise_sd * rng.normal();
  }
  d.images = zeta * factor_matrix(grid);
  d.grid = grid;

  out.truth.zeta = zeta;
  out.truth.contrast = truth.contrast(d.X, zeta);
  out.truth.oracle_action = (out.truth.contrast.array() > 0.0).cast<int>();
  out.truth.mean_outcome = truth.baseline(d.X, zeta) + d.A.cast<double>().cwiseProduct(out.truth.contrast);
  d.Y = out.truth.mean_outcome + noise;
  return out;
}

Policy oracle_policy(const SimConfig& cfg) {
  const TrueModel truth = true_model(cfg);
  return [truth](const SubjectBatch& b) -> Eigen::VectorXi {
    return (truth.contrast(b.X, b.zeta).array() > 0.0).cast<int>();
  };
}

Policy constant_policy(int action) {
  return [action](const SubjectBatch& b) -> Eigen::VectorXi { return Eigen::VectorXi::Constant(b.X.rows(), action); };
}

Policy model_policy(const FittedModel& model, const ImageSmoother& smoother) {
  const ContrastRule rule = contrast_rule(model, smoother);
  return [rule](const SubjectBatch& b) -> Eigen::VectorXi { return rule.actions(b.X, b.images); };
}

std::vector<double> evaluate_values(const std::vector<Policy>& policies, const SimConfig& cfg, int n_eval,
                                    std::uint64_t seed) {
  if (n_eval < 1000) throw Error(Errc::InvalidConfig, "value evaluation needs at least 1000 subjects");
  cfg.validate();
  const TrueModel truth = true_model(cfg);
  const Eigen::MatrixXd chol = covariate_factor(cfg);
  const Eigen::MatrixXd factors = factor_matrix(PixelGrid::unit_square(cfg.grid_side));
  Rng rng(seed);

  std::vector<double> sums(policies.size(), 0.0);
  for (int start = 0; start < n_eval; start += kEvalChunk) {
    const int size = std::min(kEvalChunk, n_eval - start);
    SubjectBatch batch{Eigen::MatrixXd(size, cfg.q), Eigen::MatrixXd(size, 2), {}};
    for (int i = 0; i < size; ++i) {
      draw_covariates(rng, chol, batch.X, i);
      batch.zeta(i, 0) = rng.normal();
      batch.zeta(i, 1) = rng.normal();
    }
    batch.images = batch.zeta * factors;
    const Eigen::VectorXd base = truth.baseline(batch.X, batch.zeta);
    const Eigen::VectorXd contrast = truth.contrast(batch.X, batch.zeta);
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const Eigen::VectorXi act = policies[p](batch);
      sums[p] += base.sum() + act.cast<double>().dot(contrast);
    }
  }
  for (double& s : sums) s /= n_eval;
  return sums;
}

double evaluate_value(const Policy& policy, const SimConfig& cfg, int n_eval, std::uint64_t seed) {
  return evaluate_values({policy}, cfg, n_eval, seed)[0];
}

// ---------------------------------------------------------------------------

void StudyConfig::validate() const {
  if (reps < 1) throw Error(Errc::InvalidConfig, "a study needs at least one replication");
  if (r_values.empty() || n_values.empty() || criteria.empty())
    throw Error(Errc::InvalidConfig, "study needs at least one r, one n and one criterion");
  if (n_eval < 1000) throw Error(Errc::InvalidConfig, "n_eval must be at least 1000");
  for (double r : r_values) {
    SimConfig c = base;
    c.r = r;
    for (int n : n_values) {
      c.n = n;
      c.validate();
    }
  }
}

std::string StudyConfig::fingerprint() const {
  nlohmann::json j = {
      {"q", base.q},
      {"grid_side", base.grid_side},
      {"alpha1", to_vector(base.alpha1_or_default())},
      {"alpha2", to_vector(base.alpha2_or_default())},
      {"beta1", base.beta1.surface ? "custom" : format_double(base.beta1.constant)},
      {"beta2", base.beta2.surface ? "custom" : format_double(base.beta2.constant)},
      {"noise_sd", base.noise_sd},
      {"treat_prob", base.treat_prob},
      {"r_values", r_values},
      {"n_values", n_values},
      {"alpha", alpha},
      {"triangles", triangles},
      {"degree", degree},
      {"smoothness", smoothness},
      {"penalty", penalty},
      {"n_eval", n_eval},
      {"seed", seed},
  };
  std::vector<std::string> names;
  for (auto c : criteria) names.emplace_back(criterion_name(c));
  j["criteria"] = names;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RepOutcome run_replication(const StudyConfig& cfg, const ImageSmoother& smoother, int setting, int rep) {
  const auto n_count = static_cast<int>(cfg.n_values.size());
  SimConfig sc = cfg.base;
  sc.r = cfg.r_values[static_cast<std::size_t>(setting / n_count)];
  sc.n = cfg.n_values[static_cast<std::size_t>(setting % n_count)];
  sc.seed = replication_seed(cfg.seed, setting, rep);

  RepOutcome out;
  out.setting = setting;
  out.rep = rep;
  try {
    const SimData sim = generate(sc);
    sim.data.validate();
    const Eigen::MatrixXd coeffs = smoother.fit_rows(sim.data.images);
    std::vector<Policy> policies{oracle_policy(sc)};
    for (Criterion c : cfg.criteria) {
      FitConfig fc;
      fc.criterion = c;
      fc.alpha = cfg.alpha;
      const FittedModel m = fit_coefficients(sim.data.X, sim.data.A, sim.data.Y, coeffs, smoother.space_ptr(), fc);
      out.fits.push_back({c, 0.0, m.alpha1, m.alpha2, m.k1(), m.k2()});
      policies.push_back(model_policy(m, smoother));
    }
    const auto values = evaluate_values(policies, sc, cfg.n_eval, splitmix64(sc.seed + 1));
    out.value_opt = values[0];
    for (std::size_t c = 0; c < out.fits.size(); ++c) out.fits[c].value = values[c + 1];
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.fits.clear();
    out.error = std::string(e.category()) + ": " + e.what();
  }
  return out;
}

nlohmann::json to_json(const RepOutcome& o) {
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& f : o.fits) {
    fits.push_back({{"criterion", criterion_name(f.criterion)},
                    {"value", f.value},
                    {"alpha1", to_vector(f.alpha1)},
                    {"alpha2", to_vector(f.alpha2)},
                    {"K1", f.k1},
                    {"K2", f.k2}});
  }
  return {{"setting", o.setting}, {"rep", o.rep},       {"ok", o.ok},
          {"error", o.error},     {"value_opt", o.value_opt}, {"fits", fits}};
}

RepOutcome rep_outcome_from_json(const nlohmann::json& j) {
  try {
    RepOutcome o;
    o.setting = j.at("setting").get<int>();
    o.rep = j.at("rep").get<int>();
    o.ok = j.at("ok").get<bool>();
    o.error = j.at("error").get<std::string>();
    o.value_opt = j.at("value_opt").get<double>();
    for (const auto& f : j.at("fits")) {
      o.fits.push_back({parse_criterion(f.at("criterion").get<std::string>()), f.at("value").get<double>(),
                        from_vector(f.at("alpha1").get<std::vector<double>>()),
                        from_vector(f.at("alpha2").get<std::vector<double>>()), f.at("K1").get<int>(),
                        f.at("K2").get<int>()});
    }
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidData, std::string("malformed replication checkpoint: ") + e.what());
  }
}

const StudyRow& StudyReport::row(double r, int n, Criterion c) const {
  for (const auto& row : rows)
    if (row.r == r && row.n == n && row.criterion == c) return row;
  throw Error(Errc::InvalidConfig, "no study row for the requested setting");
}

StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  const auto mesh = build_triangulation(rectangle_polygon(0.0, 0.0, 1.0, 1.0), cfg.triangles);
  const auto space = SplineSpace::build(mesh, cfg.degree, cfg.smoothness);
  const ImageSmoother smoother(space, PixelGrid::unit_square(cfg.base.grid_side).points, cfg.penalty);
  const std::string fp = cfg.fingerprint();
  if (cfg.checkpoint_dir) std::filesystem::create_directories(*cfg.checkpoint_dir);

  const int settings = static_cast<int>(cfg.r_values.size() * cfg.n_values.size());
  StudyReport report;
  report.n_reps = cfg.reps;
  report.seed = cfg.seed;
  for (int s = 0; s < settings; ++s) {
    std::vector<RepOutcome> outcomes;
    for (int rep = 0; rep < cfg.reps; ++rep) {
      std::optional<RepOutcome> outcome;
      std::filesystem::path ckpt;
      if (cfg.checkpoint_dir) {
        ckpt = *cfg.checkpoint_dir / ("rep_s" + std::to_string(s) + "_r" + std::to_string(rep) + ".json");
        if (cfg.resume && std::filesystem::exists(ckpt)) {
          std::ifstream in(ckpt);
          const auto j = nlohmann::json::parse(in, nullptr, false);
          if (!j.is_discarded() && j.value("fingerprint", "") == fp && j.contains("outcome"))
            outcome = rep_outcome_from_json(j["outcome"]);
        }
      }
      if (!outcome) {
        outcome = run_replication(cfg, smoother, s, rep);
        if (cfg.checkpoint_dir) {
          const auto tmp = std::filesystem::path(ckpt).concat(".tmp");
          {
            std::ofstream out(tmp);
            out << nlohmann::json{{"fingerprint", fp}, {"outcome", to_json(*outcome)}}.dump() << '\n';
            if (!out) throw Error(Errc::IoError, "cannot write checkpoint " + tmp.string());
          }
          std::filesystem::rename(tmp, ckpt);
        }
      }
      outcomes.push_back(std::move(*outcome));
    }

    int failed = 0;
    for (const auto& o : outcomes) failed += o.ok ? 0 : 1;
    if (failed * 20 > cfg.reps)
      throw Error(Errc::StudyFailure, std::to_string(failed) + " of " + std::to_string(cfg.reps) +
                                          " replications failed in setting " + std::to_string(s));

    SimConfig sc = cfg.base;
    const double r = cfg.r_values[static_cast<std::size_t>(s) / cfg.n_values.size()];
    const int n = cfg.n_values[static_cast<std::size_t>(s) % cfg.n_values.size()];
    const Eigen::VectorXd a1 = sc.alpha1_or_default();
    const Eigen::VectorXd a2 = sc.alpha2_or_default();
    for (std::size_t c = 0; c < cfg.criteria.size(); ++c) {
      StudyRow row;
      row.r = r;
      row.n = n;
      row.criterion = cfg.criteria[c];
      row.mse_alpha1 = Eigen::VectorXd::Zero(sc.q);
      row.mse_alpha2 = Eigen::VectorXd::Zero(sc.q);
      row.reps_failed = failed;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const auto& f = o.fits[c];
        ++row.reps_ok;
        row.value_opt += o.value_opt;
        row.value_hat += f.value;
        row.mse_alpha1 += (f.alpha1 - a1).array().square().matrix();
        row.mse_alpha2 += (f.alpha2 - a2).array().square().matrix();
        row.mean_k1 += f.k1;
        row.mean_k2 += f.k2;
      }
      const double k = row.reps_ok;
      row.value_opt /= k;
      row.value_hat /= k;
      row.mse_alpha1 /= k;
      row.mse_alpha2 /= k;
      row.mean_k1 /= k;
      row.mean_k2 /= k;
      report.rows.push_back(std::move(row));
    }
    for (auto& o : outcomes) report.reps.push_back(std::move(o));
  }
  return report;
}

nlohmann::json to_json(const StudyReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"r", row.r},
                    {"n", row.n},
                    {"criterion", criterion_name(row.criterion)},
                    {"V_opt", row.value_opt},
                    {"V_hat", row.value_hat},
                    {"mse_alpha1", to_vector(row.mse_alpha1)},
                    {"mse_alpha2", to_vector(row.mse_alpha2)},
                    {"mean_K1", row.mean_k1},
                    {"mean_K2", row.mean_k2},
                    {"reps_ok", row.reps_ok},
                    {"reps_failed", row.reps_failed}});
  }
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& o : report.reps) reps.push_back(to_json(o));
  return {{"seed", report.seed}, {"reps", report.n_reps}, {"rows", rows}, {"replications", reps}};
}

std::string value_table_csv(const StudyReport& report) {
  // Columns follow the order of the (r, n) settings.
  std::vector<std::pair<double, int>> settings;
  std::vector<Criterion> criteria;
  for (const auto& row : report.rows) {
    const std::pair<double, int> key{row.r, row.n};
    if (std::find(settings.begin(), settings.end(), key) == settings.end()) settings.push_back(key);
    if (std::find(criteria.begin(), criteria.end(), row.criterion) == criteria.end()) criteria.push_back(row.criterion);
  }
  std::ostringstream out;
  out << "quantity";
  for (const auto& [r, n] : settings) out << ",r=" << format_double(r) << ";n=" << n;
  out << "\nV(pi_opt)";
  for (const auto& [r, n] : settings) out << ',' << format_double(report.row(r, n, criteria.front()).value_opt);
  out << '\n';
  for (Criterion c : criteria) {
    out << "V(pi_hat_" << criterion_name(c) << ')';
    for (const auto& [r, n] : settings) out << ',' << format_double(report.row(r, n, c).value_hat);
    out << '\n';
  }
  return out.str();
}

std::string mse_table_csv(const StudyReport& report) {
  std::ostringstream out;
  out << "r,n,criterion";
  const auto q = report.rows.empty() ? 0 : report.rows.front().mse_alpha1.size();
  for (int l = 1; l <= 2; ++l)
    for (Eigen::Index k = 1; k <= q; ++k) out << ",alpha" << l << k;
  out << '\n';
  for (const auto& row : report.rows) {
    out << format_double(row.r) << ',' << row.n << ',' << criterion_name(row.criterion);
    for (Eigen::Index k = 0; k < q; ++k) out << ',' << format_double(row.mse_alpha1[k] * 100.0);
    for (Eigen::Index k = 0; k < q; ++k) out << ',' << format_double(row.mse_alpha2[k] * 100.0);
    out << '\n';
  }
  return out.str();
}

}  // namespace fitr
