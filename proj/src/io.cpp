#include "fitr/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fitr/errors.hpp"
#include "fitr/format.hpp"

namespace fitr {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.remove_suffix(1);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  return out;
}

std::string located(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line) + ": ";
}

double snap(double v) { return std::round(v * 1e12) / 1e12; }

// Smallest positive gap between sorted distinct values (0 when fewer than two).
double min_spacing(std::set<double> values) {
  double best = 0.0;
  double prev = 0.0;
  bool first = true;
  for (double v : values) {
    if (!first && (best == 0.0 || v - prev < best)) best = v - prev;
    prev = v;
    first = false;
  }
  return best;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vector_at(const nlohmann::json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Dataset SubjectTable::to_dataset() const {
  if (!has_outcome) throw Error(Errc::InvalidData, "dataset lacks the Y and A columns needed for fitting");
  return Dataset{X, A, Y, images, grid};
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  auto out = open_output(path);
  out << "id,Y,A";
  for (int k = 1; k <= data.q(); ++k) out << ",X" << k;
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    out << i + 1 << ',' << format_double(data.Y[i]) << ',' << data.A[i];
    for (int k = 0; k < data.q(); ++k) out << ',' << format_double(data.X(i, k));
    out << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

void write_images_csv(const std::filesystem::path& path, const Dataset& data) {
  auto out = open_output(path);
  out << "id,s1,s2,value\n";
  std::vector<std::string> coords;
  coords.reserve(data.grid.size());
  for (const auto& p : data.grid.points) coords.push_back(format_double(p.x) + ',' + format_double(p.y));
  for (int i = 0; i < data.n(); ++i) {
    const std::string id = std::to_string(i + 1);
    for (std::size_t j = 0; j < coords.size(); ++j)
      out << id << ',' << coords[j] << ',' << format_double(data.images(i, static_cast<Eigen::Index>(j))) << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

SubjectTable read_subjects(const std::filesystem::path& dataset_csv, const std::filesystem::path& images_csv) {
  SubjectTable table;
  std::unordered_map<std::string, int> row_of;
  {
    auto in = open_input(dataset_csv);
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::InvalidData, dataset_csv.string() + " is empty");
    const auto header = split_csv(line);
    int id_col = -1, y_col = -1, a_col = -1;
    std::vector<int> x_cols;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
      const auto h = header[static_cast<std::size_t>(c)];
      if (h == "id") id_col = c;
      else if (h == "Y") y_col = c;
      else if (h == "A") a_col = c;
      else if (h.size() > 1 && h[0] == 'X') x_cols.push_back(c);
      else throw Error(Errc::InvalidData, located(dataset_csv, 1) + "unknown column '" + std::string(h) + "'");
    }
    if (id_col < 0 || x_cols.empty())
      throw Error(Errc::InvalidData, located(dataset_csv, 1) + "header needs an id column and X1..Xq");
    if ((y_col < 0) != (a_col < 0))
      throw Error(Errc::InvalidData, located(dataset_csv, 1) + "Y and A must be given together");
    table.has_outcome = y_col >= 0;

    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    std::vector<int> as;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto f = split_csv(line);
      if (f.size() != header.size()) throw Error(Errc::InvalidData, located(dataset_csv, lineno) + "wrong field count");
      try {
        std::string id(f[static_cast<std::size_t>(id_col)]);
        if (!row_of.emplace(id, static_cast<int>(table.ids.size())).second)
          throw Error(Errc::InvalidData, "duplicate id " + id);
        table.ids.push_back(id);
        std::vector<double> x;
        for (int c : x_cols) x.push_back(parse_double(f[static_cast<std::size_t>(c)]));
        xs.push_back(std::move(x));
        if (table.has_outcome) {
          ys.push_back(parse_double(f[static_cast<std::size_t>(y_col)]));
          const double a = parse_double(f[static_cast<std::size_t>(a_col)]);
          if (a != 0.0 && a != 1.0) throw Error(Errc::InvalidData, "treatment must be 0 or 1");
          as.push_back(static_cast<int>(a));
        }
      } catch (const Error& e) {
        throw Error(Errc::InvalidData, located(dataset_csv, lineno) + e.what());
      }
    }
    const auto n = static_cast<Eigen::Index>(table.ids.size());
    if (n == 0) throw Error(Errc::InvalidData, dataset_csv.string() + " has no subjects");
    table.X.resize(n, static_cast<Eigen::Index>(x_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < table.X.cols(); ++k) table.X(i, k) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    if (table.has_outcome) {
      table.Y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
      table.A = Eigen::Map<const Eigen::VectorXi>(as.data(), n);
    }
  }

  const auto n = table.ids.size();
  std::vector<std::vector<std::pair<Point2, double>>> samples(n);
  {
    auto in = open_input(images_csv);
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::InvalidData, images_csv.string() + " is empty");
    const auto header = split_csv(line);
    if (header.size() != 4 || header[0] != "id" || header[1] != "s1" || header[2] != "s2" || header[3] != "value")
      throw Error(Errc::InvalidData, located(images_csv, 1) + "header must be id,s1,s2,value");
    std::size_t lineno = 1;
    std::string last_id;
    int last_row = -1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto f = split_csv(line);
      if (f.size() != 4) throw Error(Errc::InvalidData, located(images_csv, lineno) + "wrong field count");
      if (last_row < 0 || f[0] != last_id) {
        last_id = std::string(f[0]);
        const auto it = row_of.find(last_id);
        if (it == row_of.end())
          throw Error(Errc::InvalidData, located(images_csv, lineno) + "id " + last_id + " is not in the dataset");
        last_row = it->second;
      }
      try {
        samples[static_cast<std::size_t>(last_row)].push_back(
            {{parse_double(f[1]), parse_double(f[2])}, parse_double(f[3])});
      } catch (const Error& e) {
        throw Error(Errc::InvalidData, located(images_csv, lineno) + e.what());
      }
    }
  }

  // Grid from the subject listed first in the image file.
  const auto& first = samples[0];
  if (first.empty()) throw Error(Errc::InvalidData, "subject " + table.ids[0] + " has no image");
  std::map<std::pair<double, double>, int> column_of;
  std::set<double> xs, ys;
  for (const auto& [p, v] : first) {
    if (!column_of.emplace(std::pair{p.x, p.y}, static_cast<int>(table.grid.points.size())).second)
      throw Error(Errc::InvalidData, "subject " + table.ids[0] + " repeats a pixel");
    table.grid.points.push_back(p);
    xs.insert(p.x);
    ys.insert(p.y);
  }
  const double dx = min_spacing(xs);
  const double dy = min_spacing(ys);
  table.grid.cell_area = (dx > 0.0 ? dx : 1.0) * (dy > 0.0 ? dy : 1.0);

  const auto width = static_cast<Eigen::Index>(table.grid.points.size());
  table.images.resize(static_cast<Eigen::Index>(n), width);
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(samples[i].size()) != width)
      throw Error(Errc::InvalidData, "subject " + table.ids[i] + " is not imaged on the shared grid");
    std::vector<char> seen(static_cast<std::size_t>(width), 0);
    for (const auto& [p, v] : samples[i]) {
      const auto it = column_of.find({p.x, p.y});
      if (it == column_of.end() || seen[static_cast<std::size_t>(it->second)])
        throw Error(Errc::InvalidData, "subject " + table.ids[i] + " is not imaged on the shared grid");
      seen[static_cast<std::size_t>(it->second)] = 1;
      table.images(static_cast<Eigen::Index>(i), it->second) = v;
    }
  }
  return table;
}

std::vector<Point2> infer_domain(const PixelGrid& grid) {
  if (grid.points.empty()) throw Error(Errc::InvalidData, "empty pixel grid");
  std::set<double> xs, ys;
  for (const auto& p : grid.points) {
    xs.insert(p.x);
    ys.insert(p.y);
  }
  const double hx = min_spacing(xs) / 2.0;
  const double hy = min_spacing(ys) / 2.0;
  const double x0 = snap(*xs.begin() - hx), x1 = snap(*xs.rbegin() + hx);
  const double y0 = snap(*ys.begin() - hy), y1 = snap(*ys.rbegin() + hy);
  if (!(x1 > x0 && y1 > y0)) throw Error(Errc::DegeneratePolygon, "pixel grid does not span a two-dimensional domain");
  return rectangle_polygon(x0, y0, x1, y1);
}

nlohmann::json truth_to_json(const SimConfig& cfg, const SimTruth& truth) {
  const TrueModel tm = true_model(cfg);
  nlohmann::json zeta = nlohmann::json::array();
  for (Eigen::Index i = 0; i < truth.zeta.rows(); ++i) zeta.push_back({truth.zeta(i, 0), truth.zeta(i, 1)});
  std::vector<int> actions(truth.oracle_action.data(), truth.oracle_action.data() + truth.oracle_action.size());
  return {{"alpha1", to_vector(tm.alpha1)},
          {"alpha2", to_vector(tm.alpha2)},
          {"beta1_factor_integrals", {tm.i1[0], tm.i1[1]}},
          {"beta2_factor_integrals", {tm.i2[0], tm.i2[1]}},
          {"zeta", std::move(zeta)},
          {"contrast", to_vector(truth.contrast)},
          {"oracle_action", actions},
          {"mean_outcome", to_vector(truth.mean_outcome)}};
}

nlohmann::json model_to_json(const FittedModel& model, const double penalty) {
  const SplineSpace& space = *model.space();
  nlohmann::json mesh;
  to_json(mesh, space.mesh());
  return {{"format", "fitr-model/1"},
          {"mesh", std::move(mesh)},
          {"degree", space.degree()},
          {"smoothness", space.smoothness()},
          {"penalty", penalty},
          {"space_hash", space.hash()},
          {"criterion", criterion_name(model.criterion)},
          {"selection_alpha", model.alpha},
          {"n", model.n},
          {"prefit_K1", model.prefit_k1},
          {"prefit_K2", model.prefit_k2},
          {"alpha1", to_vector(model.alpha1)},
          {"alpha2", to_vector(model.alpha2)},
          {"gamma1", to_vector(model.gamma1)},
          {"gamma2", to_vector(model.gamma2)},
          {"mean1", to_vector(model.mean1)},
          {"mean2", to_vector(model.mean2)},
          {"residual_variance", model.residual_variance},
          {"condition_number", model.condition_number},
          {"basis1", to_json(model.basis1)},
          {"basis2", to_json(model.basis2)}};
}

LoadedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "fitr-model/1") throw Error(Errc::InvalidData, "not a fitr model document");
    auto space = SplineSpace::build(mesh_from_json(j.at("mesh")), j.at("degree").get<int>(),
                                    j.at("smoothness").get<int>());
    const auto hash = j.at("space_hash").get<std::string>();
    if (hash != space->hash())
      throw Error(Errc::SpaceMismatch, "model space_hash " + hash + " does not match its mesh (" + space->hash() + ")");
    FittedModel model{
        .alpha1 = vector_at(j, "alpha1"),
        .alpha2 = vector_at(j, "alpha2"),
        .gamma1 = vector_at(j, "gamma1"),
        .gamma2 = vector_at(j, "gamma2"),
        .basis1 = fpc_basis_from_json(space, j.at("basis1")),
        .basis2 = fpc_basis_from_json(space, j.at("basis2")),
        .mean1 = vector_at(j, "mean1"),
        .mean2 = vector_at(j, "mean2"),
        .residual_variance = j.at("residual_variance").get<double>(),
        .condition_number = j.at("condition_number").get<double>(),
        .criterion = parse_criterion(j.at("criterion").get<std::string>()),
        .alpha = j.at("selection_alpha").get<double>(),
        .prefit_k1 = j.at("prefit_K1").get<int>(),
        .prefit_k2 = j.at("prefit_K2").get<int>(),
        .n = j.at("n").get<int>(),
    };
    if (model.gamma1.size() != model.k1() || model.gamma2.size() != model.k2() ||
        model.alpha1.size() != model.alpha2.size())
      throw Error(Errc::InvalidData, "model coefficient lengths are inconsistent");
    return {std::move(model), j.at("penalty").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidData, std::string("malformed model JSON: ") + e.what());
  }
}

void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(Errc::InvalidConfig, "unknown key '" + key + "' in " + where);
  }
}

namespace {

const std::vector<std::string> kSimKeys = {"n",     "q",     "r",        "grid_side",  "alpha1", "alpha2",
                                           "beta1", "beta2", "noise_sd", "treat_prob", "seed"};

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::InvalidConfig, std::string("key '") + key + "' has the wrong type");
  }
}

void read_sim_keys(const nlohmann::json& j, SimConfig& cfg) {
  read_key(j, "n", cfg.n);
  read_key(j, "q", cfg.q);
  read_key(j, "r", cfg.r);
  read_key(j, "grid_side", cfg.grid_side);
  read_key(j, "noise_sd", cfg.noise_sd);
  read_key(j, "treat_prob", cfg.treat_prob);
  read_key(j, "seed", cfg.seed);
  read_key(j, "beta1", cfg.beta1.constant);
  read_key(j, "beta2", cfg.beta2.constant);
  std::vector<double> a;
  if (j.contains("alpha1")) {
    read_key(j, "alpha1", a);
    cfg.alpha1 = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  }
  if (j.contains("alpha2")) {
    read_key(j, "alpha2", a);
    cfg.alpha2 = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  }
}

}  // namespace

SimConfig sim_config_from_json(const nlohmann::json& j) {
  check_keys(j, kSimKeys, "simulation config");
  SimConfig cfg;
  read_sim_keys(j, cfg);
  cfg.validate();
  return cfg;
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
  auto allowed = kSimKeys;
  for (const char* k : {"r_values", "n_values", "criteria", "reps", "alpha", "triangles", "degree", "smoothness",
                        "penalty", "n_eval"})
    allowed.emplace_back(k);
  check_keys(j, allowed, "study config");
  StudyConfig cfg;
  read_sim_keys(j, cfg.base);
  read_key(j, "r_values", cfg.r_values);
  read_key(j, "n_values", cfg.n_values);
  read_key(j, "reps", cfg.reps);
  read_key(j, "alpha", cfg.alpha);
  read_key(j, "triangles", cfg.triangles);
  read_key(j, "degree", cfg.degree);
  read_key(j, "smoothness", cfg.smoothness);
  read_key(j, "penalty", cfg.penalty);
  read_key(j, "n_eval", cfg.n_eval);
  read_key(j, "seed", cfg.seed);
  if (j.contains("criteria")) {
    std::vector<std::string> names;
    read_key(j, "criteria", names);
    cfg.criteria.clear();
    for (const auto& name : names) cfg.criteria.push_back(parse_criterion(name));
  }
  return cfg;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::InvalidData, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

std::string raster_csv(const SplineFunction& fn, int side) {
  if (side < 1) throw Error(Errc::InvalidConfig, "raster side must be positive");
  const auto& verts = fn.space().mesh().vertices();
  double x0 = verts[0].x, x1 = x0, y0 = verts[0].y, y1 = y0;
  for (const auto& v : verts) {
    x0 = std::min(x0, v.x);
    x1 = std::max(x1, v.x);
    y0 = std::min(y0, v.y);
    y1 = std::max(y1, v.y);
  }
  std::ostringstream out;
  out << "s1,s2,value\n";
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      const Point2 p{x0 + (x1 - x0) * (a + 0.5) / side, y0 + (y1 - y0) * (b + 0.5) / side};
      out << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(fn(p)) << '\n';
    }
  }
  return out.str();
}

}  // namespace fitr
