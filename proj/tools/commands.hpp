#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fitr::cli {

struct SimulateOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

struct FitOptions {
  std::filesystem::path dataset;
  std::filesystem::path images;
  std::filesystem::path out;
  std::string criterion = "pve";
  double alpha = 0.99;
  int triangles = 32;
  int degree = 5;
  int smoothness = 1;
  std::string penalty = "0";  // a number or "gcv"
  std::string domain;         // "x0,y0,x1,y1"; empty infers it from the grid
  int bootstrap = 0;
  std::uint64_t seed = 1;
};

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path dataset;
  std::filesystem::path images;
  std::filesystem::path out;
};

struct EvalOptions {
  std::filesystem::path config;  // optional
  std::filesystem::path out_dir;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> criteria;
  std::optional<double> alpha;
  std::optional<int> triangles, degree, smoothness;
  std::optional<double> penalty;
  bool resume = false;
};

struct RasterOptions {
  std::filesystem::path model;
  std::string what = "beta2";  // beta1, beta2, phi1:k or phi2:k
  int side = 100;
  std::filesystem::path out;
};

void cmd_simulate(const SimulateOptions& opt, std::ostream& log);
void cmd_fit(const FitOptions& opt, std::ostream& log);
void cmd_predict(const PredictOptions& opt, std::ostream& log);
void cmd_eval(const EvalOptions& opt, std::ostream& log);
void cmd_raster(const RasterOptions& opt, std::ostream& log);

/// Parses arguments and dispatches. Failures print one line
/// "error: <Category>: <message>" to `err` and return a nonzero status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fitr::cli
