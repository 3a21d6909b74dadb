#ifndef SRTUNE_CLI_HPP
#define SRTUNE_CLI_HPP

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "srtune/errors.hpp"
#include "srtune/io.hpp"
#include "srtune/metrics.hpp"
#include "srtune/nifti.hpp"
#include "srtune/solvers.hpp"
#include "srtune/stats.hpp"
#include "srtune/tuner.hpp"

namespace srtune {

/// Process exit codes of the command-line tool.
namespace exit_code {
inline constexpr int success = 0;
inline constexpr int usage = 1;
inline constexpr int validation = 2;
inline constexpr int runtime = 3;
} // namespace exit_code

namespace cli {

namespace fs = std::filesystem;

inline json manifest(const std::string& command, const std::vector<std::string>& args, json config, json seeds) {
  return {{"tool", "srtune"},
          {"version", code_version},
          {"command", command},
          {"arguments", args},
          {"config", std::move(config)},
          {"seeds", std::move(seeds)}};
}

inline std::vector<SeriesRequest> balanced_requests(int count) {
  const Orientation cycle[3] = {Orientation::axial, Orientation::coronal, Orientation::sagittal};
  std::vector<SeriesRequest> r;
  for (int i = 0; i < count; ++i)
    r.push_back({cycle[i % 3], std::nullopt});
  return r;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  double field = 1.5;
  double ga = 30.0;
  int grid_size = 64;
  std::uint64_t seed = 0;
  std::string motion = "little";
  int series = simulated_series_count;
  std::string exam;
  std::string out;
  int workers = 1;
};

inline int run_simulate(const SimulateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.workers < 1)
    throw InputError("--workers must be >= 1");
  std::vector<SeriesRequest> requests;
  double field = a.field, ga = a.ga;
  int grid_size = a.grid_size;
  std::uint64_t seed = a.seed;
  MotionConfig motion = MotionConfig::preset(parse_motion_amplitude(a.motion));
  json config;
  if (!a.exam.empty()) {
    const ExamDescriptor exam = parse_exam_descriptor(read_json(a.exam));
    field = exam.field_strength;
    ga = exam.ga_weeks;
    grid_size = exam.grid_size;
    seed = exam.seed;
    motion = MotionConfig::preset(exam.motion);
    for (const auto& s : exam.series)
      requests.push_back({s.orientation, s.slices});
    config = {{"exam", to_json(exam)}};
  } else {
    if (a.series < 1 || a.series > simulated_series_count)
      throw InputError("--series-count must lie in [1, 9]");
    requests = balanced_requests(a.series);
    config = {{"field_strength", field},
              {"ga_weeks", ga},
              {"grid_size", grid_size},
              {"series_count", a.series},
              {"motion", motion_json(motion)}};
  }
  const std::uint64_t phantom_seed = derive_seed(seed, "phantom");
  const std::uint64_t acquisition_seed = derive_seed(seed, "acquisition");
  const SimulatedSubject subject =
      simulate_subject(field, ga, grid_size, requests, motion, phantom_seed, acquisition_seed, a.workers);
  write_subject(subject, a.out);
  write_json((fs::path(a.out) / "manifest.json").string(),
             manifest("simulate", args, config,
                      {{"base", seed}, {"phantom", phantom_seed}, {"acquisition", acquisition_seed}}));
  out << "wrote " << subject.series.size() << " series and the reference to " << a.out << "\n";
  return exit_code::success;
}

// ------------------------------------------------------------ reconstruct

struct ReconstructArgs {
  std::string input;
  std::string regularizer = "tikhonov1";
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::string series;
  std::optional<int> max_iters;
  std::optional<double> tol;
  std::string init = "backprojection";
  std::string out;
  int workers = 1;
};

inline std::vector<int> parse_index_list(const std::string& s, std::size_t limit) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) {
    if (part.empty())
      continue;
    int v;
    try {
      std::size_t used = 0;
      v = std::stoi(part, &used);
      if (used != part.size())
        throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw InputError("bad series index '" + part + "'");
    }
    if (v < 0 || static_cast<std::size_t>(v) >= limit)
      throw InputError("series index " + part + " out of range");
    out.push_back(v);
  }
  if (out.empty())
    throw InputError("empty series list");
  return out;
}

inline int run_reconstruct(const ReconstructArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.alpha.has_value() == a.lambda.has_value())
    throw InputError("give exactly one of --alpha and --lambda");
  const RegularizerKind reg = parse_regularizer(a.regularizer);
  SolverConfig cfg = SolverConfig::defaults(reg, a.alpha ? *a.alpha : convert_lambda(*a.lambda));
  if (a.max_iters)
    cfg.max_iters = *a.max_iters;
  if (a.tol)
    cfg.tol = *a.tol;
  if (a.init != "zeros" && a.init != "backprojection")
    throw InputError("--init must be zeros or backprojection");
  cfg.init = a.init == "zeros" ? SolverInit::zeros : SolverInit::backprojection;
  cfg.validate();

  const SimulatedSubject subject = read_subject(a.input);
  std::vector<int> chosen;
  if (a.series.empty())
    for (std::size_t i = 0; i < subject.series.size(); ++i)
      chosen.push_back(static_cast<int>(i));
  else
    chosen = parse_index_list(a.series, subject.series.size());
  const ReconstructionProblem problem = make_problem(subject, chosen, std::nullopt, a.workers);
  const SolveReport rep = solve(problem.op, problem.y, subject.reference.geom, reg, cfg);

  const std::string path = a.out.empty() ? (fs::path(a.input) / "recon.nii").string() : a.out;
  write_volume(rep.x, path, NiftiType::float64);
  const MetricReport m = compare_reconstructions(rep.x, subject.reference, subject.mask);
  json report{{"regularizer", to_string(reg)},
              {"alpha", cfg.alpha},
              {"series", chosen},
              {"iterations", rep.iterations},
              {"converged", rep.converged},
              {"initial_objective", rep.initial_objective},
              {"final_objective", rep.final_objective},
              {"psnr_db", finite_or_null(m.psnr_db)},
              {"psnr_infinite", m.psnr_infinite},
              {"ssim", m.ssim}};
  if (reg == RegularizerKind::tikhonov1)
    report["relative_residual"] = rep.relative_residual;
  const std::string stem = (fs::path(path).parent_path() / fs::path(path).stem()).string();
  write_json(stem + ".json", report);
  write_json(stem + ".manifest.json",
             manifest("reconstruct", args,
                      {{"input", a.input},
                       {"regularizer", to_string(reg)},
                       {"alpha", cfg.alpha},
                       {"series", chosen},
                       {"max_iters", cfg.max_iters},
                       {"tol", cfg.tol},
                       {"init", a.init}},
                      json::object()));
  out << report.dump(2) << "\n";
  return exit_code::success;
}

// ------------------------------------------------------------------- tune

struct TuneArgs {
  std::string config;
  std::optional<std::string> protocol;
  std::optional<double> field;
  std::optional<int> series;
  std::optional<double> ga;
  std::optional<int> repeats;
  std::optional<int> grid_size;
  std::optional<std::string> regularizer;
  std::optional<std::string> grid;
  std::vector<double> alphas;
  std::optional<double> default_alpha;
  std::optional<int> phantoms;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> exam;
  std::vector<double> ga_list;
  std::optional<std::string> out;
  std::optional<int> max_iters;
  std::optional<double> tol;
  std::optional<std::string> motion;
};

inline ExperimentConfig resolve_experiment(const TuneArgs& a) {
  json j = a.config.empty() ? json::object() : read_json(a.config);
  const std::string base_dir = a.config.empty() ? "." : fs::path(a.config).parent_path().string();
  if (a.protocol)
    j["protocol"] = *a.protocol;
  if (a.regularizer) {
    j["regularizer"] = *a.regularizer;
    if (!a.grid && a.alphas.empty())
      j.erase("grid");
  }
  if (a.grid)
    j["grid"] = *a.grid;
  if (!a.alphas.empty()) {
    if (!a.default_alpha)
      throw InputError("--alphas needs --default-alpha");
    j["grid"] = {{"values", a.alphas}, {"default_alpha", *a.default_alpha}};
  }
  json& c = j["configuration"];
  if (c.is_null())
    c = json::object();
  if (a.field)
    c["field_strength"] = *a.field;
  if (a.series)
    c["n_series"] = *a.series;
  if (a.ga)
    c["ga_weeks"] = *a.ga;
  if (a.repeats)
    c["repeats"] = *a.repeats;
  if (a.grid_size)
    c["grid_size"] = *a.grid_size;
  if (a.motion)
    c["motion_amplitude"] = *a.motion;
  if (a.phantoms)
    j["phantoms"] = *a.phantoms;
  if (a.seed)
    j["seed"] = *a.seed;
  if (a.workers)
    j["workers"] = *a.workers;
  if (a.exam) {
    j.erase("exam");
    j["exam_path"] = fs::absolute(*a.exam).string();
  }
  if (!a.ga_list.empty())
    j["ga_list"] = a.ga_list;
  if (a.out)
    j["output_dir"] = *a.out;
  if (a.max_iters)
    j["solver"]["max_iters"] = *a.max_iters;
  if (a.tol)
    j["solver"]["tol"] = *a.tol;
  return parse_experiment_config(j, base_dir);
}

inline int run_tune(const TuneArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const ExperimentConfig e = resolve_experiment(a);
  TuneOptions opts;
  opts.workers = e.workers;
  opts.solver = e.solver;

  std::vector<TuneRow> rows;
  json runs = json::array();
  json seeds = json::array();
  std::optional<json> ga_table;
  auto record = [&](const TuneResult& r) {
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    runs.push_back({{"config_id", r.config_id},
                    {"ga_weeks", r.config.ga_weeks},
                    {"alpha_star_psnr", r.alpha_star_psnr},
                    {"alpha_star_ssim", r.alpha_star_ssim}});
  };
  if (e.protocol == Protocol::setting) {
    for (int k = 0; k < e.phantoms; ++k) {
      Configuration c = e.configuration;
      c.seed = e.phantoms == 1 ? e.seed : derive_seed(e.seed, "phantom-instance", static_cast<std::uint64_t>(k));
      c.tag = e.phantoms == 1 ? "" : "p" + std::to_string(k);
      seeds.push_back(derived_seeds(c));
      record(tune_setting(c, e.grid, e.regularizer, opts));
    }
  } else if (e.protocol == Protocol::subject) {
    const ExamDescriptor& exam = *e.exam;
    seeds.push_back({{"base", exam.seed}, {"phantom", derive_seed(exam.seed, "phantom")}});
    record(tune_subject(exam, e.grid, e.regularizer, opts));
  } else {
    Configuration c = e.configuration;
    c.seed = e.seed;
    seeds.push_back(derived_seeds(c));
    const GaSweepResult sweep = ga_sweep(e.ga_list, c, e.grid, e.regularizer, opts);
    json table = json::array();
    for (const auto& row : sweep.table)
      table.push_back(
          {{"ga_weeks", row.ga_weeks}, {"alpha_star_psnr", row.alpha_star_psnr}, {"alpha_star_ssim", row.alpha_star_ssim}});
    ga_table = table;
    for (const auto& r : sweep.runs)
      record(r);
  }

  fs::create_directories(e.output_dir);
  const fs::path dir(e.output_dir);
  write_rows_csv((dir / "rows.csv").string(), rows);
  json summary = summarize_rows(rows, e.grid.default_alpha);
  summary["protocol"] = to_string(e.protocol);
  summary["regularizer"] = to_string(e.regularizer);
  summary["grid"] = to_json(e.grid);
  summary["runs"] = runs;
  if (ga_table) {
    summary["ga_table"] = *ga_table;
    std::string csv = "ga_weeks,alpha_star_psnr,alpha_star_ssim\n";
    for (const auto& row : *ga_table)
      csv += format_double(row["ga_weeks"].get<double>()) + "," +
             format_double(row["alpha_star_psnr"].get<double>()) + "," +
             format_double(row["alpha_star_ssim"].get<double>()) + "\n";
    write_text((dir / "ga_sweep.csv").string(), csv);
  }
  write_json((dir / "summary.json").string(), summary);
  write_json((dir / "manifest.json").string(), manifest("tune", args, to_json(e), seeds));
  out << "alpha*_psnr=" << format_double(summary["alpha_star_psnr"].get<double>())
      << " alpha*_ssim=" << format_double(summary["alpha_star_ssim"].get<double>()) << " rows=" << rows.size()
      << " -> " << e.output_dir << "\n";
  return exit_code::success;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string reference;
  std::string test;
  std::string mask;
  std::string out;
};

inline int run_evaluate(const EvaluateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const Volume3D ref = read_volume(a.reference);
  const Volume3D test = read_volume(a.test);
  if (!same_grid(ref.geom, test.geom, 1e-6))
    throw ShapeError("evaluate: volumes are on different grids");
  Mask mask;
  if (a.mask.empty()) {
    mask = support_mask(ref);
  } else {
    const Volume3D m = read_volume(a.mask);
    if (m.geom.dims != ref.geom.dims)
      throw MaskError("evaluate: mask grid differs from the reference");
    mask = Mask{m.geom.dims, std::vector<std::uint8_t>(m.data.size()), "file " + a.mask};
    for (std::size_t i = 0; i < m.data.size(); ++i)
      mask.data[i] = m.data[i] != 0.0;
  }
  const MetricReport r = compare_reconstructions(test, ref, mask);
  json j{{"psnr_db", finite_or_null(r.psnr_db)},
         {"psnr_infinite", r.psnr_infinite},
         {"ssim", r.ssim},
         {"mask", r.mask},
         {"mask_voxels", r.mask_voxels},
         {"data_range", r.data_range}};
  if (!a.out.empty()) {
    write_json(a.out, j);
    const fs::path p(a.out);
    write_json((p.parent_path() / p.stem()).string() + ".manifest.json",
               manifest("evaluate", args, {{"reference", a.reference}, {"test", a.test}, {"mask", a.mask}},
                        json::object()));
  }
  out << j.dump(2) << "\n";
  return exit_code::success;
}

// ----------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> csv;
  std::string out;
};

struct ReportCell {
  std::optional<double> def, star; // mean metric
  std::optional<double> p;
};

inline std::string format_cell(const std::optional<double>& v, int precision, bool mark = false) {
  if (!v)
    return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  if (mark)
    os << "†";
  return os.str();
}

/// Mean-metric table: one row per (field strength; series count), columns
/// (α_def, α*) × (PSNR, SSIM) for each regularizer, † marking paired
/// signed-rank p < 0.05.
inline int run_report(const ReportArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  std::vector<TuneRow> rows;
  for (const auto& path : a.csv) {
    const auto r = read_rows_csv(path);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (rows.empty())
    throw InputError("report: no rows");
  std::map<std::pair<double, int>, std::map<RegularizerKind, std::vector<TuneRow>>> groups;
  for (const auto& r : rows)
    groups[{r.field_strength, r.n_series}][r.regularizer].push_back(r);

  const RegularizerKind regs[2] = {RegularizerKind::tv, RegularizerKind::tikhonov1};
  std::ostringstream md;
  md << "| (Field strength; # LR) | TV PSNR def | TV PSNR a* | TV SSIM def | TV SSIM a* "
     << "| Tik PSNR def | Tik PSNR a* | Tik SSIM def | Tik SSIM a* |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  json table = json::array();
  for (const auto& [key, by_reg] : groups) {
    std::ostringstream label;
    label << "(" << field_key(key.first) << "T; " << key.second << ")";
    md << "| " << label.str() << " ";
    json jrow{{"field_strength", key.first}, {"n_series", key.second}};
    for (RegularizerKind reg : regs) {
      const auto it = by_reg.find(reg);
      json jreg = nullptr;
      for (Metric m : {Metric::psnr, Metric::ssim}) {
        ReportCell cell;
        if (it != by_reg.end()) {
          const auto& rs = it->second;
          const double def = make_grid(grid_kind_for(reg)).default_alpha;
          const double star = select_alpha(rs, m);
          bool has_def = false;
          for (const auto& r : rs)
            has_def = has_def || r.alpha == def;
          cell.star = mean_metric(rs, star, m);
          if (has_def) {
            cell.def = mean_metric(rs, def, m);
            const json p = paired_p_value(rs, star, def, m);
            if (!p.is_null())
              cell.p = p.get<double>();
          }
          if (jreg.is_null())
            jreg = json::object();
          jreg[to_string(m)] = {{"alpha_star", star},
                                {"default_alpha", def},
                                {"mean_default", cell.def ? json(*cell.def) : json(nullptr)},
                                {"mean_star", finite_or_null(*cell.star)},
                                {"p_value", cell.p ? json(*cell.p) : json(nullptr)}};
        }
        const int precision = m == Metric::psnr ? 1 : 2;
        md << "| " << format_cell(cell.def, precision) << " | "
           << format_cell(cell.star, precision, cell.p && *cell.p < 0.05) << " ";
      }
      jrow[to_string(reg)] = jreg;
    }
    md << "|\n";
    table.push_back(jrow);
  }
  md << "\n† paired signed-rank p < 0.05 between default and tuned alpha.\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const fs::path dir(a.out);
    write_text((dir / "report.md").string(), md.str());
    write_json((dir / "report.json").string(), {{"table", table}});
    write_json((dir / "manifest.json").string(), manifest("report", args, {{"inputs", a.csv}}, json::object()));
  }
  out << md.str();
  return exit_code::success;
}

} // namespace cli

/// Entry point of the `srtune` tool. Exit codes: 0 success, 1 usage error,
/// 2 validation error, 3 runtime or divergence error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i)
    args.emplace_back(argv[i]);

  CLI::App app{"Regularization tuning for super-resolution reconstruction of simulated fetal brain MRI", "srtune"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(code_version));

  cli::SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a phantom reference and LR series");
  simulate->add_option("--field", sim.field, "Field strength in tesla (1.5 or 3)");
  simulate->add_option("--ga", sim.ga, "Gestational age in weeks");
  simulate->add_option("--grid-size", sim.grid_size, "HR voxels per axis");
  simulate->add_option("--seed", sim.seed, "Base seed");
  simulate->add_option("--motion", sim.motion, "Motion amplitude: little or moderate");
  simulate->add_option("--series-count", sim.series, "Series to simulate, cycled over orientations");
  simulate->add_option("--exam", sim.exam, "Exam descriptor JSON (overrides the options above)");
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--workers", sim.workers, "Worker threads");

  cli::ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct one simulated subject at one alpha");
  reconstruct->add_option("--input", rec.input, "Directory written by simulate")->required();
  reconstruct->add_option("--regularizer", rec.regularizer, "tv or tikhonov1");
  reconstruct->add_option("--alpha", rec.alpha, "Regularization weight");
  reconstruct->add_option("--lambda", rec.lambda, "Fidelity weight, alpha = 1/lambda");
  reconstruct->add_option("--series", rec.series, "Comma-separated series indices (default all)");
  reconstruct->add_option("--max-iters", rec.max_iters, "Iteration limit");
  reconstruct->add_option("--tol", rec.tol, "Stopping tolerance");
  reconstruct->add_option("--init", rec.init, "zeros or backprojection");
  reconstruct->add_option("--out", rec.out, "Output NIfTI path (default <input>/recon.nii)");
  reconstruct->add_option("--workers", rec.workers, "Worker threads");

  cli::TuneArgs tun;
  auto* tune = app.add_subcommand("tune", "Run a tuning protocol");
  tune->add_option("--config", tun.config, "Experiment configuration JSON");
  tune->add_option("--protocol", tun.protocol, "setting, subject or ga-sweep");
  tune->add_option("--field", tun.field, "Field strength in tesla");
  tune->add_option("--series", tun.series, "Series used per reconstruction");
  tune->add_option("--ga", tun.ga, "Gestational age in weeks");
  tune->add_option("--repeats", tun.repeats, "Repeats per configuration");
  tune->add_option("--grid-size", tun.grid_size, "HR voxels per axis");
  tune->add_option("--regularizer", tun.regularizer, "tv or tikhonov1");
  tune->add_option("--grid", tun.grid, "tv-style or tikhonov-style");
  tune->add_option("--alphas", tun.alphas, "Custom grid values")->delimiter(',');
  tune->add_option("--default-alpha", tun.default_alpha, "Default value for a custom grid");
  tune->add_option("--phantoms", tun.phantoms, "Independent phantom instances (setting protocol)");
  tune->add_option("--seed", tun.seed, "Base seed");
  tune->add_option("--workers", tun.workers, "Worker threads");
  tune->add_option("--exam", tun.exam, "Exam descriptor JSON (subject protocol)");
  tune->add_option("--ga-list", tun.ga_list, "GA values for ga-sweep")->delimiter(',');
  tune->add_option("--out", tun.out, "Output directory");
  tune->add_option("--max-iters", tun.max_iters, "Solver iteration limit");
  tune->add_option("--tol", tun.tol, "Solver tolerance");
  tune->add_option("--motion", tun.motion, "Motion amplitude: little or moderate");

  cli::EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "PSNR and SSIM of a test volume against a reference");
  evaluate->add_option("reference", ev.reference, "Reference NIfTI")->required();
  evaluate->add_option("test", ev.test, "Test NIfTI")->required();
  evaluate->add_option("--mask", ev.mask, "Mask NIfTI (default: dilated reference support)");
  evaluate->add_option("--out", ev.out, "Write the metrics JSON here");

  cli::ReportArgs rep;
  auto* report = app.add_subcommand("report", "Aggregate tuning CSVs into a mean-metric table");
  report->add_option("csv", rep.csv, "Row CSV files")->required();
  report->add_option("--out", rep.out, "Output directory for report.md and report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::success;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_code::success;
  } catch (const CLI::CallForVersion&) {
    out << code_version << "\n";
    return exit_code::success;
  } catch (const CLI::ParseError& e) {
    err << "srtune: " << e.what() << "\n";
    return exit_code::usage;
  }

  try {
    if (simulate->parsed())
      return cli::run_simulate(sim, args, out);
    if (reconstruct->parsed())
      return cli::run_reconstruct(rec, args, out);
    if (tune->parsed())
      return cli::run_tune(tun, args, out);
    if (evaluate->parsed())
      return cli::run_evaluate(ev, args, out);
    return cli::run_report(rep, args, out);
  } catch (const ValidationError& e) {
    err << "srtune: " << e.what() << "\n";
    return exit_code::validation;
  } catch (const DivergenceError& e) {
    err << "srtune: " << e.what() << "\n";
    return exit_code::runtime;
  } catch (const std::exception& e) {
    err << "srtune: " << e.what() << "\n";
    return exit_code::runtime;
  }
}

} // namespace srtune

#endif // SRTUNE_CLI_HPP
