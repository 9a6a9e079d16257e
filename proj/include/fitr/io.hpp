#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fitr/model.hpp"
#include "fitr/sim.hpp"

namespace fitr {

/// Subjects read from disk; Y and A are empty when the file lacks them.
struct SubjectTable {
  std::vector<std::string> ids;
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
  Eigen::VectorXi A;
  Eigen::MatrixXd images;
  PixelGrid grid;
  bool has_outcome = false;

  Dataset to_dataset() const;
};

/// dataset.csv: id,Y,A,X1..Xq (ids are 1-based row numbers when written).
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
/// images.csv in long form: id,s1,s2,value.
void write_images_csv(const std::filesystem::path& path, const Dataset& data);

/// Reads covariates (and Y, A when present) plus the matching long-form
/// images. Every subject must be imaged on the same set of points; the grid
/// order is that of the first subject in the image file.
SubjectTable read_subjects(const std::filesystem::path& dataset_csv, const std::filesystem::path& images_csv);

/// Rectangle spanned by the pixel centers, widened by half a pixel on every
/// side (rounded to 1e-12).
std::vector<Point2> infer_domain(const PixelGrid& grid);

nlohmann::json truth_to_json(const SimConfig& cfg, const SimTruth& truth);

/// Model document with mesh, spline settings, both bases and coefficients.
nlohmann::json model_to_json(const FittedModel& model, double penalty);

struct LoadedModel {
  FittedModel model;
  double penalty = 0.0;
};
/// Rebuilds the spline space from the embedded mesh and verifies its
/// fingerprint. Throws Error(SpaceMismatch) or Error(InvalidData).
LoadedModel model_from_json(const nlohmann::json& j);

/// Rejects keys outside `allowed`, naming the first offender.
void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where);

/// Keys: n, q, r, grid_side, alpha1, alpha2, beta1, beta2, noise_sd,
/// treat_prob, seed.
SimConfig sim_config_from_json(const nlohmann::json& j);
/// The simulation keys plus r_values, n_values, criteria, reps, alpha,
/// triangles, degree, smoothness, penalty, n_eval.
StudyConfig study_config_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// (s1, s2, value) rows of `fn` on a side x side grid of pixel centers over
/// the bounding box of the mesh.
std::string raster_csv(const SplineFunction& fn, int side);

}  // namespace fitr
