#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fitr/errors.hpp"
#include "fitr/rng.hpp"
#include "fitr/sim.hpp"
#include "oracles.hpp"

using namespace fitr;

namespace {

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return Errc::InvalidData;
}

// Standard deviation of the true contrast alpha2'x + i2'zeta under X = (1, Xtilde).
double contrast_sd(const SimConfig& cfg) {
  const Eigen::VectorXd a = cfg.alpha2_or_default().tail(cfg.q - 1);
  const Eigen::MatrixXd omega = autoregressive_covariance(cfg.q - 1, cfg.r);
  const auto t = true_model(cfg);
  return std::sqrt(a.dot(omega * a) + t.i2.squaredNorm());
}

StudyConfig small_study() {
  StudyConfig s;
  s.r_values = {0.0};
  s.n_values = {60};
  s.reps = 2;
  s.triangles = 8;
  s.n_eval = 1000;
  s.seed = 99;
  return s;
}

}  // namespace

TEST_CASE("portable random streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng c(42);
  CHECK(c.next() == std::mt19937_64(42)());
  Rng s1 = Rng::stream(7, 1), s2 = Rng::stream(7, 2);
  CHECK(s1.next() != s2.next());
  Rng u(3);
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    mean += z / n;
    var += z * z / n;
  }
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) CHECK(u.below(7) < 7);
  CHECK(splitmix64(0) != splitmix64(1));
}

TEST_CASE("noise-free zero model gives zero outcomes") {
  SimConfig cfg;
  cfg.n = 50;
  cfg.noise_sd = 0.0;
  cfg.beta1.constant = 0.0;
  cfg.beta2.constant = 0.0;
  cfg.alpha1 = Eigen::VectorXd::Zero(5);
  cfg.alpha2 = Eigen::VectorXd::Zero(5);
  const auto sim = generate(cfg);
  CHECK(sim.data.Y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sim.truth.oracle_action.sum() == 0);
}

TEST_CASE("factor integrals: closed form against independent quadrature") {
  const double z1 = oracle::unit_square_integral([](double x, double y) { return z1_surface({x, y}); });
  const double z2 = oracle::unit_square_integral([](double x, double y) { return z2_surface({x, y}); });
  CHECK(factor_integral(CoefficientMap{}, 1) == doctest::Approx(10.0 / 3.0).epsilon(1e-14));
  CHECK(std::abs(factor_integral(CoefficientMap{}, 1) - z1) < 1e-10);
  CHECK(std::abs(factor_integral(CoefficientMap{}, 2) - z2) < 1e-10);

  // General surfaces go through quadrature inside the library.
  CoefficientMap wave;
  wave.surface = [](const Point2& s) { return std::sin(3.0 * s.x) + s.y * s.y; };
  for (int k = 1; k <= 2; ++k) {
    const double ref = oracle::unit_square_integral([&](double x, double y) {
      return (std::sin(3.0 * x) + y * y) * (k == 1 ? z1_surface({x, y}) : z2_surface({x, y}));
    });
    CHECK(std::abs(factor_integral(wave, k) - ref) < 1e-10);
  }
  CoefficientMap flat;
  flat.surface = [](const Point2&) { return 2.0; };
  CHECK(std::abs(factor_integral(flat, 2) - 2.0 * factor_integral(CoefficientMap{}, 2)) < 1e-10);
  CHECK(code_of([] { factor_integral(CoefficientMap{}, 3); }) == Errc::InvalidConfig);
}

TEST_CASE("generated data: covariates, treatment, images and determinism") {
  SimConfig cfg;
  cfg.n = 500;
  cfg.r = 0.5;
  cfg.seed = 17;
  const auto sim = generate(cfg);
  const auto& d = sim.data;
  CHECK(d.X.col(0).isOnes());
  const Eigen::MatrixXd xt = d.X.rightCols(4);
  const Eigen::MatrixXd centered = xt.rowwise() - xt.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (cfg.n - 1);
  CHECK(std::abs(cov(0, 1) - 0.5) < 0.1);
  CHECK(std::abs(cov(0, 2) - 0.25) < 0.1);
  CHECK(std::abs(d.A.cast<double>().mean() - 0.5) < 0.1);
  CHECK(oracle::numerical_rank(d.images) == 2);

  // Images are exactly the two-factor combination.
  const auto& g = d.grid;
  for (int i : {0, 7, 499})
    for (std::size_t p : {std::size_t{0}, std::size_t{811}, g.size() - 1})
      CHECK(d.images(i, static_cast<Eigen::Index>(p)) ==
            doctest::Approx(sim.truth.zeta(i, 0) * z1_surface(g.points[p]) +
                            sim.truth.zeta(i, 1) * z2_surface(g.points[p])).epsilon(1e-14));

  // Oracle actions follow the true contrast and the outcome model.
  const auto tm = true_model(cfg);
  CHECK((sim.truth.contrast - tm.contrast(d.X, sim.truth.zeta)).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < cfg.n; ++i) CHECK(sim.truth.oracle_action[i] == (sim.truth.contrast[i] > 0 ? 1 : 0));
  const Eigen::VectorXd resid = d.Y - sim.truth.mean_outcome;
  CHECK(std::abs(resid.mean()) < 0.15);
  CHECK(std::abs(std::sqrt(resid.squaredNorm() / cfg.n) - 1.0) < 0.1);

  const auto again = generate(cfg);
  CHECK(again.data.Y == d.Y);
  CHECK(again.data.images == d.images);
  cfg.seed = 18;
  CHECK(generate(cfg).data.Y != d.Y);
}

TEST_CASE("invalid simulation settings") {
  SimConfig cfg;
  cfg.r = 1.0;
  CHECK(code_of([&] { generate(cfg); }) == Errc::InvalidConfig);
  cfg = SimConfig{};
  cfg.n = 1;
  CHECK(code_of([&] { generate(cfg); }) == Errc::InvalidConfig);
  cfg = SimConfig{};
  cfg.noise_sd = -1.0;
  CHECK(code_of([&] { generate(cfg); }) == Errc::InvalidConfig);
  cfg = SimConfig{};
  cfg.alpha1 = Eigen::VectorXd::Ones(3);
  CHECK(code_of([&] { generate(cfg); }) == Errc::InvalidConfig);
  CHECK(code_of([] { evaluate_value(constant_policy(1), SimConfig{}, 999, 1); }) == Errc::InvalidConfig);
}

TEST_CASE("policy values against closed forms") {
  for (double r : {0.0, 0.5}) {
    SimConfig cfg;
    cfg.r = r;
    const int n_eval = 200000;
    const auto v = evaluate_values({constant_policy(0), constant_policy(1), oracle_policy(cfg)}, cfg, n_eval, 5);
    const double sd = contrast_sd(cfg);
    // Baseline alpha1'X + i1'zeta has mean alpha11 = 1; the contrast has mean alpha21 = 1.
    const auto tm = true_model(cfg);
    const Eigen::VectorXd a1 = cfg.alpha1_or_default().tail(4);
    const double base_sd = std::sqrt(a1.dot(autoregressive_covariance(4, r) * a1) + tm.i1.squaredNorm());
    const double tol_base = 4.0 * base_sd / std::sqrt(n_eval);
    CHECK(std::abs(v[0] - 1.0) < tol_base);
    CHECK(std::abs(v[1] - 2.0) < 4.0 * (base_sd + sd) / std::sqrt(n_eval));
    const double opt = oracle::optimal_value(1.0, 1.0, sd);
    MESSAGE("r = " << r << ": optimal value " << v[2] << ", closed form " << opt);
    CHECK(std::abs(v[2] - opt) < 4.0 * (base_sd + sd) / std::sqrt(n_eval));
    CHECK(v[2] >= v[0]);
    CHECK(v[2] >= v[1]);
  }
}

TEST_CASE("study runs are deterministic, resumable and bounded by the oracle") {
  auto cfg = small_study();
  const auto a = run_study(cfg);
  const auto b = run_study(cfg);
  CHECK(to_json(a).dump() == to_json(b).dump());
  REQUIRE(a.rows.size() == 2);
  CHECK(a.rows[0].criterion == Criterion::PVE);
  CHECK(a.rows[1].criterion == Criterion::PAVE);
  CHECK(a.rows[0].reps_ok + a.rows[0].reps_failed == 2);
  for (const auto& row : a.rows) CHECK(row.value_hat <= row.value_opt + 0.1);

  const auto dir = std::filesystem::temp_directory_path() / "fitr_test_checkpoints";
  std::filesystem::remove_all(dir);
  cfg.checkpoint_dir = dir;
  const auto first = run_study(cfg);
  CHECK(to_json(first).dump() == to_json(a).dump());
  CHECK(std::filesystem::exists(dir / "rep_s0_r1.json"));
  // Drop one checkpoint, as an interrupted run would, then resume.
  std::filesystem::remove(dir / "rep_s0_r1.json");
  cfg.resume = true;
  const auto resumed = run_study(cfg);
  CHECK(to_json(resumed).dump() == to_json(a).dump());

  // Checkpoints from a different configuration are ignored.
  cfg.seed = 100;
  const auto other = run_study(cfg);
  cfg.checkpoint_dir.reset();
  cfg.resume = false;
  CHECK(to_json(other).dump() == to_json(run_study(cfg)).dump());
  std::filesystem::remove_all(dir);

  const auto rep = a.reps.front();
  const auto back = rep_outcome_from_json(nlohmann::json::parse(to_json(rep).dump()));
  CHECK(to_json(back).dump() == to_json(rep).dump());
}

TEST_CASE("study tables follow the report layout") {
  auto cfg = small_study();
  cfg.reps = 1;
  cfg.n_values = {60, 80};
  const auto rep = run_study(cfg);
  const auto values = value_table_csv(rep);
  CHECK(values.rfind("quantity,r=0;n=60,r=0;n=80\nV(pi_opt),", 0) == 0);
  CHECK(values.find("\nV(pi_hat_PVE),") != std::string::npos);
  CHECK(values.find("\nV(pi_hat_PAVE),") != std::string::npos);
  const auto mse = mse_table_csv(rep);
  CHECK(mse.rfind("r,n,criterion,alpha11,alpha12,alpha13,alpha14,alpha15,alpha21,", 0) == 0);
  CHECK(std::count(mse.begin(), mse.end(), '\n') == 5);
  CHECK(rep.row(0.0, 80, Criterion::PAVE).n == 80);
  CHECK(code_of([&] { rep.row(0.5, 80, Criterion::PAVE); }) == Errc::InvalidConfig);

  auto bad = cfg;
  bad.reps = 0;
  CHECK(code_of([&] { run_study(bad); }) == Errc::InvalidConfig);
}
