#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fitr/errors.hpp"
#include "fitr/format.hpp"
#include "fitr/io.hpp"
#include "fitr/model.hpp"
#include "fitr/sim.hpp"

namespace fitr::cli {

namespace {

const std::vector<double> kGcvCandidates = {0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0};

std::string join(const Eigen::VectorXd& v, std::size_t limit = SIZE_MAX) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size() && static_cast<std::size_t>(i) < limit; ++i) {
    if (i > 0) s += ' ';
    s += format_double(v[i]);
  }
  return s;
}

std::vector<Point2> parse_domain(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_double(item));
  if (v.size() != 4) throw Error(Errc::InvalidConfig, "--domain expects x0,y0,x1,y1");
  if (!(v[2] > v[0] && v[3] > v[1])) throw Error(Errc::DegeneratePolygon, "--domain rectangle has zero area");
  return rectangle_polygon(v[0], v[1], v[2], v[3]);
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  auto out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

std::string summary_text(const FittedModel& m, double penalty) {
  std::ostringstream s;
  s << "criterion: " << criterion_name(m.criterion) << " (alpha " << format_double(m.alpha) << ")\n";
  if (m.criterion == Criterion::PAVE)
    s << "pre-fit K1: " << m.prefit_k1 << "\npre-fit K2: " << m.prefit_k2 << '\n';
  s << "K1: " << m.k1() << "\nK2: " << m.k2() << '\n';
  s << "n: " << m.n << "\nq: " << m.alpha1.size() << '\n';
  s << "spline: degree " << m.space()->degree() << ", smoothness " << m.space()->smoothness() << ", "
    << m.space()->mesh().num_triangles() << " triangles, dimension " << m.space()->dim() << ", penalty "
    << format_double(penalty) << '\n';
  s << "eigenvalues channel 1: " << join(m.basis1.eigvals(), 5) << '\n';
  s << "eigenvalues channel 2: " << join(m.basis2.eigvals(), 5) << '\n';
  s << "alpha1: " << join(m.alpha1) << '\n';
  s << "alpha2: " << join(m.alpha2) << '\n';
  s << "gamma1: " << join(m.gamma1) << '\n';
  s << "gamma2: " << join(m.gamma2) << '\n';
  s << "residual variance: " << format_double(m.residual_variance) << '\n';
  s << "condition number: " << format_double(m.condition_number) << '\n';
  return s.str();
}

}  // namespace

void cmd_simulate(const SimulateOptions& opt, std::ostream& log) {
  SimConfig cfg = sim_config_from_json(read_json_file(opt.config));
  if (opt.seed) cfg.seed = *opt.seed;
  const SimData sim = generate(cfg);
  write_dataset_csv(opt.out_dir / "dataset.csv", sim.data);
  write_images_csv(opt.out_dir / "images.csv", sim.data);
  write_text_file(opt.out_dir / "truth.json", truth_to_json(cfg, sim.truth).dump(2) + "\n");
  log << "wrote " << sim.data.n() << " subjects to " << opt.out_dir.string() << '\n';
}

void cmd_fit(const FitOptions& opt, std::ostream& log) {
  FitConfig fc;
  fc.criterion = parse_criterion(opt.criterion);
  fc.alpha = opt.alpha;
  const SubjectTable table = read_subjects(opt.dataset, opt.images);
  const Dataset data = table.to_dataset();
  data.validate();

  const auto polygon = opt.domain.empty() ? infer_domain(data.grid) : parse_domain(opt.domain);
  const auto space = SplineSpace::build(build_triangulation(polygon, opt.triangles), opt.degree, opt.smoothness);
  double penalty = 0.0;
  if (opt.penalty == "gcv") {
    penalty = select_penalty_gcv(space, data.grid.points, data.images, kGcvCandidates);
  } else {
    penalty = parse_double(opt.penalty);
  }
  const ImageSmoother smoother(space, data.grid.points, penalty);
  const FittedModel model = fit(data, smoother, fc);
  write_text_file(opt.out, model_to_json(model, penalty).dump() + "\n");

  std::string summary = summary_text(model, penalty);
  if (opt.bootstrap > 0) {
    const BootstrapResult boot = bootstrap_ci(data, smoother, fc, {opt.bootstrap, 0.95, opt.seed});
    std::ostringstream csv;
    csv << "coefficient,estimate,lower,upper\n";
    summary += "bootstrap: " + std::to_string(boot.replicates) + " replicates, " + std::to_string(boot.failures) +
               " failed, 95% percentile intervals\n";
    for (const auto& iv : boot.intervals) {
      csv << iv.name << ',' << format_double(iv.estimate) << ',' << format_double(iv.lower) << ','
          << format_double(iv.upper) << '\n';
      summary += "  " + iv.name + ": " + format_double(iv.estimate) + " [" + format_double(iv.lower) + ", " +
                 format_double(iv.upper) + "]\n";
    }
    write_text_file(sibling(opt.out, ".bootstrap.csv"), csv.str());
  }
  write_text_file(sibling(opt.out, ".summary.txt"), summary);
  log << summary;
}

void cmd_predict(const PredictOptions& opt, std::ostream& log) {
  const LoadedModel loaded = model_from_json(read_json_file(opt.model));
  const SubjectTable table = read_subjects(opt.dataset, opt.images);
  const ImageSmoother smoother(loaded.model.space(), table.grid.points, loaded.penalty);
  const auto recs = recommend_all(loaded.model, smoother, table.X, table.images);
  std::ostringstream csv;
  csv << "id,action,contrast,q0,q1\n";
  int treated = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    treated += r.action;
    csv << table.ids[i] << ',' << r.action << ',' << format_double(r.contrast) << ','
        << format_double(r.q_values[0]) << ',' << format_double(r.q_values[1]) << '\n';
  }
  write_text_file(opt.out, csv.str());
  log << "recommended treatment for " << treated << " of " << recs.size() << " subjects\n";
}

void cmd_eval(const EvalOptions& opt, std::ostream& log) {
  StudyConfig cfg = opt.config.empty() ? StudyConfig{} : study_config_from_json(read_json_file(opt.config));
  if (opt.reps) cfg.reps = *opt.reps;
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.alpha) cfg.alpha = *opt.alpha;
  if (opt.triangles) cfg.triangles = *opt.triangles;
  if (opt.degree) cfg.degree = *opt.degree;
  if (opt.smoothness) cfg.smoothness = *opt.smoothness;
  if (opt.penalty) cfg.penalty = *opt.penalty;
  if (!opt.criteria.empty()) {
    cfg.criteria.clear();
    for (const auto& c : opt.criteria) cfg.criteria.push_back(parse_criterion(c));
  }
  cfg.checkpoint_dir = opt.out_dir / "checkpoints";
  cfg.resume = opt.resume;
  const StudyReport report = run_study(cfg);
  write_text_file(opt.out_dir / "report.json", to_json(report).dump(2) + "\n");
  write_text_file(opt.out_dir / "report.csv", value_table_csv(report));
  write_text_file(opt.out_dir / "report_mse.csv", mse_table_csv(report));
  log << value_table_csv(report);
}

void cmd_raster(const RasterOptions& opt, std::ostream& log) {
  const LoadedModel loaded = model_from_json(read_json_file(opt.model));
  const FittedModel& m = loaded.model;
  std::optional<SplineFunction> fn;
  if (opt.what == "beta1") {
    fn = reconstruct_beta(m, 1);
  } else if (opt.what == "beta2") {
    fn = reconstruct_beta(m, 2);
  } else if (opt.what.rfind("phi1:", 0) == 0 || opt.what.rfind("phi2:", 0) == 0) {
    const int k = static_cast<int>(parse_double(opt.what.substr(5)));
    const FpcBasis& basis = opt.what[3] == '1' ? m.basis1 : m.basis2;
    if (k < 1 || k > basis.available()) throw Error(Errc::InvalidConfig, "eigenfunction index out of range");
    fn = basis.eigenfunction(k - 1);
  } else {
    throw Error(Errc::InvalidConfig, "--what must be beta1, beta2, phi1:<k> or phi2:<k>");
  }
  write_text_file(opt.out, raster_csv(*fn, opt.side));
  log << "wrote " << opt.side * opt.side << " raster points to " << opt.out.string() << '\n';
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Individualized treatment regimes from imaging and scalar covariates"};
  app.name("fitr");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic data set");
  c_sim->add_option("--config", sim.config, "Simulation config (JSON)")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out", sim.out_dir, "Output directory")->required();
  c_sim->add_option("--seed", sim.seed, "Override the config seed");

  FitOptions fit_opt;
  std::filesystem::path data_dir;
  auto* c_fit = app.add_subcommand("fit", "Fit the Q-function model");
  c_fit->add_option("--data", data_dir, "Directory holding dataset.csv and images.csv");
  c_fit->add_option("--dataset", fit_opt.dataset, "dataset.csv");
  c_fit->add_option("--images", fit_opt.images, "images.csv");
  c_fit->add_option("--out", fit_opt.out, "Model JSON to write")->required();
  c_fit->add_option("--criterion", fit_opt.criterion, "pve, pave or fixed")->capture_default_str();
  c_fit->add_option("--alpha", fit_opt.alpha, "Selection threshold")->capture_default_str();
  c_fit->add_option("--triangles", fit_opt.triangles, "Target triangle count")->capture_default_str();
  c_fit->add_option("--degree", fit_opt.degree, "Spline degree")->capture_default_str();
  c_fit->add_option("--smoothness", fit_opt.smoothness, "Spline smoothness")->capture_default_str();
  c_fit->add_option("--penalty", fit_opt.penalty, "Roughness penalty or 'gcv'")->capture_default_str();
  c_fit->add_option("--domain", fit_opt.domain, "Domain rectangle x0,y0,x1,y1");
  c_fit->add_option("--bootstrap", fit_opt.bootstrap, "Bootstrap replicates (0 = none)")->capture_default_str();
  c_fit->add_option("--seed", fit_opt.seed, "Bootstrap seed")->capture_default_str();

  PredictOptions pred;
  std::filesystem::path pred_dir;
  auto* c_pred = app.add_subcommand("predict", "Recommend treatments for subjects");
  c_pred->add_option("--model", pred.model, "Model JSON")->required()->check(CLI::ExistingFile);
  c_pred->add_option("--data", pred_dir, "Directory holding dataset.csv and images.csv");
  c_pred->add_option("--dataset", pred.dataset, "dataset.csv");
  c_pred->add_option("--images", pred.images, "images.csv");
  c_pred->add_option("--out", pred.out, "Recommendations CSV")->required();

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Run the Monte Carlo study");
  c_eval->add_option("--config", ev.config, "Study config (JSON)")->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out_dir, "Output directory")->required();
  c_eval->add_option("--reps", ev.reps, "Replications per setting");
  c_eval->add_option("--seed", ev.seed, "Study seed");
  c_eval->add_option("--criterion", ev.criteria, "Criteria to evaluate (pve, pave)")->delimiter(',');
  c_eval->add_option("--alpha", ev.alpha, "Selection threshold");
  c_eval->add_option("--triangles", ev.triangles, "Target triangle count");
  c_eval->add_option("--degree", ev.degree, "Spline degree");
  c_eval->add_option("--smoothness", ev.smoothness, "Spline smoothness");
  c_eval->add_option("--penalty", ev.penalty, "Roughness penalty");
  c_eval->add_flag("--resume", ev.resume, "Reuse per-replication checkpoints");

  RasterOptions ras;
  auto* c_ras = app.add_subcommand("raster", "Export a coefficient map or eigenfunction on a grid");
  c_ras->add_option("--model", ras.model, "Model JSON")->required()->check(CLI::ExistingFile);
  c_ras->add_option("--what", ras.what, "beta1, beta2, phi1:<k> or phi2:<k>")->capture_default_str();
  c_ras->add_option("--side", ras.side, "Raster side length")->capture_default_str();
  c_ras->add_option("--out", ras.out, "Raster CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: InvalidConfig: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*c_sim) {
      cmd_simulate(sim, out);
    } else if (*c_fit) {
      if (!data_dir.empty()) {
        if (fit_opt.dataset.empty()) fit_opt.dataset = data_dir / "dataset.csv";
        if (fit_opt.images.empty()) fit_opt.images = data_dir / "images.csv";
      }
      if (fit_opt.dataset.empty() || fit_opt.images.empty())
        throw Error(Errc::InvalidConfig, "fit needs --data or both --dataset and --images");
      cmd_fit(fit_opt, out);
    } else if (*c_pred) {
      if (!pred_dir.empty()) {
        if (pred.dataset.empty()) pred.dataset = pred_dir / "dataset.csv";
        if (pred.images.empty()) pred.images = pred_dir / "images.csv";
      }
      if (pred.dataset.empty() || pred.images.empty())
        throw Error(Errc::InvalidConfig, "predict needs --data or both --dataset and --images");
      cmd_predict(pred, out);
    } else if (*c_eval) {
      cmd_eval(ev, out);
    } else if (*c_ras) {
      cmd_raster(ras, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: IoError: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace fitr::cli
