#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "fitr/errors.hpp"
#include "fitr/format.hpp"
#include "fitr/io.hpp"
#include "fitr/model.hpp"
#include "fitr/sim.hpp"
#include "oracles.hpp"

using namespace fitr;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fitr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fitr_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Simulated training set of the given size, shared by several cases.
fs::path simulated(int n, std::uint64_t seed) {
  const auto dir = fs::temp_directory_path() / ("fitr_cli_data_" + std::to_string(n) + "_" + std::to_string(seed));
  static std::set<fs::path> made;
  if (made.count(dir)) return dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  spit(dir / "config.json", "{\"n\": " + std::to_string(n) + ", \"seed\": " + std::to_string(seed) + "}");
  const auto r = run_cli({"simulate", "--config", (dir / "config.json").string(), "--out", dir.string()});
  REQUIRE(r.status == 0);
  made.insert(dir);
  return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("simulate writes the documented shapes deterministically") {
  const auto dir = scratch("simulate");
  spit(dir / "cfg.json", R"({"n": 10, "seed": 4})");
  auto r = run_cli({"simulate", "--config", (dir / "cfg.json").string(), "--out", (dir / "a").string()});
  REQUIRE(r.status == 0);
  const auto dataset = slurp(dir / "a" / "dataset.csv");
  const auto images = slurp(dir / "a" / "images.csv");
  CHECK(lines(dataset) == 11);
  CHECK(dataset.rfind("id,Y,A,X1,X2,X3,X4,X5\n", 0) == 0);
  CHECK(lines(images) == 10 * 1600 + 1);
  CHECK(images.rfind("id,s1,s2,value\n", 0) == 0);
  CHECK(fs::exists(dir / "a" / "truth.json"));

  r = run_cli({"simulate", "--config", (dir / "cfg.json").string(), "--out", (dir / "b").string()});
  REQUIRE(r.status == 0);
  CHECK(slurp(dir / "b" / "dataset.csv") == dataset);
  CHECK(slurp(dir / "b" / "images.csv") == images);
  CHECK(slurp(dir / "b" / "truth.json") == slurp(dir / "a" / "truth.json"));

  r = run_cli({"simulate", "--config", (dir / "cfg.json").string(), "--out", (dir / "c").string(), "--seed", "5"});
  REQUIRE(r.status == 0);
  CHECK(slurp(dir / "c" / "dataset.csv") != dataset);
}

TEST_CASE("malformed configs fail with a single categorized line naming the key") {
  const auto dir = scratch("badkey");
  spit(dir / "cfg.json", R"({"n": 10, "sample_size": 4})");
  const auto r = run_cli({"simulate", "--config", (dir / "cfg.json").string(), "--out", dir.string()});
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: InvalidConfig: ", 0) == 0);
  CHECK(r.err.find("sample_size") != std::string::npos);
  CHECK(lines(r.err) == 1);

  spit(dir / "r.json", R"({"r": 1.5})");
  const auto r2 = run_cli({"simulate", "--config", (dir / "r.json").string(), "--out", dir.string()});
  CHECK(r2.status != 0);
  CHECK(r2.err.rfind("error: InvalidConfig: ", 0) == 0);

  const auto r3 = run_cli({"fit", "--out", (dir / "m.json").string()});
  CHECK(r3.status != 0);
  CHECK(r3.err.rfind("error: InvalidConfig: ", 0) == 0);

  const auto r4 = run_cli({"frobnicate"});
  CHECK(r4.status != 0);
  CHECK(r4.err.rfind("error: ", 0) == 0);
}

TEST_CASE("fit, predict and raster on simulated data") {
  const auto data = simulated(500, 11);
  const auto dir = scratch("fit");
  auto r = run_cli({"fit", "--data", data.string(), "--out", (dir / "model.json").string()});
  REQUIRE(r.status == 0);
  const auto summary = slurp(dir / "model.summary.txt");
  CHECK(summary == r.out);
  CHECK(summary.find("criterion: PVE (alpha 0.99)") != std::string::npos);

  // Expected counts from the pixel-level covariance oracle of each channel.
  const auto table = read_subjects(data / "dataset.csv", data / "images.csv");
  auto oracle_k = [&](const Eigen::MatrixXd& imgs) {
    const auto ev = oracle::pixel_covariance_eigenvalues(imgs, table.grid.cell_area);
    return ev[0] / (ev[0] + ev[1]) >= 0.99 ? 1 : 2;
  };
  Eigen::MatrixXd treated = table.images;
  for (int i = 0; i < treated.rows(); ++i)
    if (table.A[i] == 0) treated.row(i).setZero();
  CHECK(summary.find("K1: " + std::to_string(oracle_k(table.images)) + "\n") != std::string::npos);
  CHECK(summary.find("K2: " + std::to_string(oracle_k(treated)) + "\n") != std::string::npos);

  r = run_cli({"fit", "--data", data.string(), "--out", (dir / "pave.json").string(), "--criterion", "pave"});
  REQUIRE(r.status == 0);
  CHECK(slurp(dir / "pave.summary.txt").find("criterion: PAVE") != std::string::npos);

  // Predictions on fresh subjects match the true optimal action.
  const auto fresh = simulated(1000, 12345);
  r = run_cli({"predict", "--model", (dir / "model.json").string(), "--data", fresh.string(), "--out",
               (dir / "pred.csv").string()});
  REQUIRE(r.status == 0);
  const auto rows = read_csv(dir / "pred.csv");
  REQUIRE(rows.size() == 1001);
  CHECK(rows[0] == std::vector<std::string>{"id", "action", "contrast", "q0", "q1"});
  const auto truth = read_json_file(fresh / "truth.json");
  const auto oracle_action = truth.at("oracle_action").get<std::vector<int>>();
  int agree = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) agree += std::stoi(rows[i][1]) == oracle_action[i - 1];
  MESSAGE("CLI predictions matching the oracle: " << agree << " / 1000");
  CHECK(agree >= 950);

  for (const std::string what : {"beta1", "beta2", "phi1:1", "phi2:1"}) {
    r = run_cli({"raster", "--model", (dir / "model.json").string(), "--what", what, "--side", "20", "--out",
                 (dir / "r.csv").string()});
    REQUIRE(r.status == 0);
    CHECK(lines(slurp(dir / "r.csv")) == 401);
  }
  r = run_cli({"raster", "--model", (dir / "model.json").string(), "--what", "phi1:999", "--out",
               (dir / "r.csv").string()});
  CHECK(r.err.rfind("error: InvalidConfig: ", 0) == 0);
}

TEST_CASE("the file round trip reproduces the in-memory pipeline bit for bit") {
  const auto data = simulated(200, 21);
  const auto dir = scratch("roundtrip");
  REQUIRE(run_cli({"fit", "--data", data.string(), "--out", (dir / "m.json").string()}).status == 0);
  REQUIRE(run_cli({"predict", "--model", (dir / "m.json").string(), "--data", data.string(), "--out",
                   (dir / "p.csv").string()}).status == 0);

  SimConfig cfg;
  cfg.n = 200;
  cfg.seed = 21;
  const auto sim = generate(cfg);
  const auto space = SplineSpace::build(build_triangulation(rectangle_polygon(0, 0, 1, 1), 32), 5, 1);
  const ImageSmoother smoother(space, sim.data.grid.points, 0.0);
  const auto model = fit(sim.data, smoother, FitConfig{});
  const auto recs = recommend_all(model, smoother, sim.data.X, sim.data.images);

  const auto rows = read_csv(dir / "p.csv");
  REQUIRE(rows.size() == recs.size() + 1);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(std::stoi(rows[i + 1][1]) == recs[i].action);
    CHECK(parse_double(rows[i + 1][2]) == recs[i].contrast);
    CHECK(parse_double(rows[i + 1][3]) == recs[i].q_values[0]);
    CHECK(parse_double(rows[i + 1][4]) == recs[i].q_values[1]);
  }

  const auto loaded = model_from_json(read_json_file(dir / "m.json"));
  CHECK(loaded.model.theta() == model.theta());
  CHECK(loaded.model.space()->hash() == space->hash());
}

TEST_CASE("predict: tie-break and space mismatch") {
  const auto data = simulated(200, 21);
  const auto dir = scratch("predict");
  REQUIRE(run_cli({"fit", "--data", data.string(), "--out", (dir / "m.json").string()}).status == 0);
  auto j = read_json_file(dir / "m.json");

  auto flat = j;
  for (auto& v : flat["alpha2"]) v = 0.0;
  for (auto& v : flat["gamma2"]) v = 0.0;
  spit(dir / "flat.json", flat.dump());
  REQUIRE(run_cli({"predict", "--model", (dir / "flat.json").string(), "--data", data.string(), "--out",
                   (dir / "flat.csv").string()}).status == 0);
  const auto rows = read_csv(dir / "flat.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][1] == "0");
    CHECK(parse_double(rows[i][2]) == 0.0);
  }

  auto wrong = j;
  wrong["space_hash"] = "0000000000000000";
  spit(dir / "wrong.json", wrong.dump());
  const auto r = run_cli({"predict", "--model", (dir / "wrong.json").string(), "--data", data.string(), "--out",
                          (dir / "w.csv").string()});
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: SpaceMismatch: ", 0) == 0);
}

TEST_CASE("fit rejects a single treatment arm") {
  const auto data = simulated(50, 3);
  const auto dir = scratch("arm");
  std::istringstream in(slurp(data / "dataset.csv"));
  std::ostringstream out;
  std::string line;
  std::getline(in, line);
  out << line << '\n';
  while (std::getline(in, line)) {
    // Columns id,Y,A,...: force A = 1 everywhere.
    const auto a = line.find(',', line.find(',') + 1);
    const auto b = line.find(',', a + 1);
    out << line.substr(0, a + 1) << '1' << line.substr(b) << '\n';
  }
  spit(dir / "dataset.csv", out.str());
  fs::copy_file(data / "images.csv", dir / "images.csv");
  const auto r = run_cli({"fit", "--data", dir.string(), "--out", (dir / "m.json").string()});
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: InvalidData: ", 0) == 0);
  CHECK(r.err.find("positivity") != std::string::npos);
}

TEST_CASE("fit with bootstrap intervals and GCV penalty") {
  const auto data = simulated(200, 8);
  const auto dir = scratch("boot");
  const auto r = run_cli({"fit", "--data", data.string(), "--out", (dir / "m.json").string(), "--bootstrap", "100",
                          "--penalty", "gcv", "--triangles", "8"});
  REQUIRE(r.status == 0);
  const auto rows = read_csv(dir / "m.bootstrap.csv");
  REQUIRE(rows.size() == 11);
  CHECK(rows[0] == std::vector<std::string>{"coefficient", "estimate", "lower", "upper"});
  CHECK(rows[1][0] == "alpha1_1");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(parse_double(rows[i][2]) <= parse_double(rows[i][3]));
}

TEST_CASE("eval: single replication, layout and resume") {
  const auto dir = scratch("eval");
  spit(dir / "study.json", R"({"r_values": [0], "n_values": [60], "n_eval": 1000, "triangles": 8})");
  auto r = run_cli({"eval", "--config", (dir / "study.json").string(), "--out", (dir / "a").string(), "--reps", "1"});
  REQUIRE(r.status == 0);
  const auto rows = read_csv(dir / "a" / "report.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"quantity", "r=0;n=60"});
  CHECK(rows[1][0] == "V(pi_opt)");
  CHECK(rows[2][0] == "V(pi_hat_PVE)");
  CHECK(rows[3][0] == "V(pi_hat_PAVE)");
  CHECK(fs::exists(dir / "a" / "report.json"));
  CHECK(fs::exists(dir / "a" / "report_mse.csv"));
  CHECK(r.out == slurp(dir / "a" / "report.csv"));

  // Two replications of one criterion, interrupted after the first and resumed.
  r = run_cli({"eval", "--config", (dir / "study.json").string(), "--out", (dir / "b").string(), "--reps", "2",
               "--criterion", "pve"});
  REQUIRE(r.status == 0);
  const auto full = slurp(dir / "b" / "report.json");
  fs::remove(dir / "b" / "checkpoints" / "rep_s0_r1.json");
  fs::remove(dir / "b" / "report.json");
  r = run_cli({"eval", "--config", (dir / "study.json").string(), "--out", (dir / "b").string(), "--reps", "2",
               "--criterion", "pve", "--resume"});
  REQUIRE(r.status == 0);
  CHECK(slurp(dir / "b" / "report.json") == full);
  CHECK(read_csv(dir / "b" / "report.csv").size() == 3);
}

TEST_CASE("the installed binary reports errors through its exit status") {
  const auto dir = scratch("binary");
  spit(dir / "cfg.json", R"({"n": 10, "bogus": 1})");
  const std::string cmd = std::string(FITR_BINARY) + " simulate --config " + (dir / "cfg.json").string() +
                          " --out " + dir.string() + " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  CHECK(status != 0);
  const auto err = slurp(dir / "err.txt");
  CHECK(err.rfind("error: InvalidConfig: ", 0) == 0);
  CHECK(err.find("bogus") != std::string::npos);

  spit(dir / "ok.json", R"({"n": 10})");
  const std::string ok = std::string(FITR_BINARY) + " simulate --config " + (dir / "ok.json").string() + " --out " +
                         (dir / "out").string() + " > /dev/null";
  CHECK(std::system(ok.c_str()) == 0);
}
