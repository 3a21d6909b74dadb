#ifndef SRTUNE_IO_HPP
#define SRTUNE_IO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "srtune/errors.hpp"
#include "srtune/geometry.hpp"
#include "srtune/nifti.hpp"
#include "srtune/series.hpp"
#include "srtune/solvers.hpp"
#include "srtune/stats.hpp"
#include "srtune/tuner.hpp"

#ifndef SRTUNE_VERSION
#define SRTUNE_VERSION "0.1.0"
#endif

namespace srtune {

inline constexpr const char* code_version = SRTUNE_VERSION;

using nlohmann::json;

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  if (std::isnan(v))
    return "nan";
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v)
      break;
  }
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf")
    return std::numeric_limits<double>::infinity();
  if (s == "-inf")
    return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError("not a number: '" + s + "'");
  }
  if (used != s.size())
    throw InputError("not a number: '" + s + "'");
  return v;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot create " + path);
  out << text;
  if (!out)
    throw Error("write failed for " + path);
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

/// Pretty JSON with a trailing newline; key order is sorted, so output is stable.
inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// JSON number, or null for non-finite values.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------
// Row CSV

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{"config_id", "field_strength", "n_series", "ga_weeks", "regularizer",
                                             "alpha",     "repeat",         "psnr_db",  "ssim"};
  return cols;
}

inline std::string rows_to_csv(const std::vector<TuneRow>& rows) {
  std::string out;
  for (std::size_t c = 0; c < csv_columns().size(); ++c)
    out += (c ? "," : "") + csv_columns()[c];
  out += "\n";
  for (const auto& r : rows) {
    if (r.config_id.find_first_of(",\"\n") != std::string::npos)
      throw InputError("csv: config_id must not contain commas, quotes or newlines");
    out += r.config_id + "," + format_double(r.field_strength) + "," + std::to_string(r.n_series) + "," +
           format_double(r.ga_weeks) + "," + to_string(r.regularizer) + "," + format_double(r.alpha) + "," +
           std::to_string(r.repeat) + "," + format_double(r.psnr_db) + "," + format_double(r.ssim) + "\n";
  }
  return out;
}

inline void write_rows_csv(const std::string& path, const std::vector<TuneRow>& rows) {
  write_text(path, rows_to_csv(rows));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  parts.push_back(cur);
  return parts;
}

/// Parses a row CSV; columns are located by header name, extra columns are ignored.
inline std::vector<TuneRow> parse_rows_csv(const std::string& text, const std::string& source = "csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw InputError(source + ": empty file");
  const auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i)
    col[header[i]] = i;
  for (const auto& name : csv_columns())
    if (!col.count(name))
      throw InputError(source + ": missing column '" + name + "'");
  std::vector<TuneRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r")
      continue;
    const auto f = split(line, ',');
    if (f.size() != header.size())
      throw InputError(source + ": line " + std::to_string(line_no) + " has the wrong number of fields");
    try {
      TuneRow r;
      r.config_id = f[col["config_id"]];
      r.field_strength = parse_double(f[col["field_strength"]]);
      r.n_series = std::stoi(f[col["n_series"]]);
      r.ga_weeks = parse_double(f[col["ga_weeks"]]);
      r.regularizer = parse_regularizer(f[col["regularizer"]]);
      r.alpha = parse_double(f[col["alpha"]]);
      r.repeat = std::stoi(f[col["repeat"]]);
      r.psnr_db = parse_double(f[col["psnr_db"]]);
      r.ssim = parse_double(f[col["ssim"]]);
      rows.push_back(r);
    } catch (const ValidationError& e) {
      throw InputError(source + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception&) {
      throw InputError(source + ": line " + std::to_string(line_no) + ": malformed field");
    }
  }
  return rows;
}

inline std::vector<TuneRow> read_rows_csv(const std::string& path) { return parse_rows_csv(read_text(path), path); }

// ---------------------------------------------------------------------------
// Summaries

/// Per-sample metric at two α values, paired by (config_id, ga, repeat).
inline std::pair<std::vector<double>, std::vector<double>> paired_metric(const std::vector<TuneRow>& rows, double a,
                                                                         double b, Metric m) {
  std::map<std::tuple<std::string, double, int>, std::pair<std::optional<double>, std::optional<double>>> by_sample;
  for (const auto& r : rows) {
    auto& slot = by_sample[{r.config_id, r.ga_weeks, r.repeat}];
    if (r.alpha == a)
      slot.first = r.metric(m);
    if (r.alpha == b)
      slot.second = r.metric(m);
  }
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& [key, v] : by_sample)
    if (v.first && v.second) {
      out.first.push_back(*v.first);
      out.second.push_back(*v.second);
    }
  return out;
}

/// Two-sided signed-rank p-value of metric(α*) vs metric(default); null
/// when every pair is tied or no pairs exist.
inline json paired_p_value(const std::vector<TuneRow>& rows, double alpha_star, double default_alpha, Metric m) {
  const auto [x, y] = paired_metric(rows, alpha_star, default_alpha, m);
  if (x.empty())
    return nullptr;
  try {
    return signedrank_test(x, y).p_value;
  } catch (const DegenerateInputError&) {
    return nullptr;
  }
}

/// Summary of one pooled row set: α* per metric, gains over the default and
/// their paired p-values.
inline json summarize_rows(const std::vector<TuneRow>& rows, double default_alpha) {
  const double a_psnr = select_alpha(rows, Metric::psnr);
  const double a_ssim = select_alpha(rows, Metric::ssim);
  json means = json::array();
  std::vector<double> alphas;
  for (const auto& r : rows)
    if (std::find(alphas.begin(), alphas.end(), r.alpha) == alphas.end())
      alphas.push_back(r.alpha);
  std::sort(alphas.begin(), alphas.end());
  for (double a : alphas)
    means.push_back({{"alpha", a},
                     {"psnr_db", finite_or_null(mean_metric(rows, a, Metric::psnr))},
                     {"ssim", mean_metric(rows, a, Metric::ssim)}});
  json j;
  j["alpha_star_psnr"] = a_psnr;
  j["alpha_star_ssim"] = a_ssim;
  j["default_alpha"] = default_alpha;
  const bool has_default = std::find(alphas.begin(), alphas.end(), default_alpha) != alphas.end();
  if (has_default) {
    j["gains"] = {{"psnr_db", finite_or_null(mean_metric(rows, a_psnr, Metric::psnr) -
                                             mean_metric(rows, default_alpha, Metric::psnr))},
                  {"ssim", mean_metric(rows, a_ssim, Metric::ssim) - mean_metric(rows, default_alpha, Metric::ssim)}};
    j["p_values"] = {{"psnr_db", paired_p_value(rows, a_psnr, default_alpha, Metric::psnr)},
                     {"ssim", paired_p_value(rows, a_ssim, default_alpha, Metric::ssim)}};
  } else {
    j["gains"] = {{"psnr_db", nullptr}, {"ssim", nullptr}};
    j["p_values"] = {{"psnr_db", nullptr}, {"ssim", nullptr}};
  }
  j["mean_metrics"] = means;
  return j;
}

inline json to_json(const GridSpec& g) {
  return {{"label", to_string(g.label)}, {"values", g.values}, {"default_alpha", g.default_alpha}};
}

inline json motion_json(const MotionConfig& m) {
  return {{"amplitude", to_string(m.amplitude)},
          {"corrupted_fraction", m.corrupted_fraction},
          {"translation_range_mm", m.translation_range},
          {"rotation_range_deg", m.rotation_range}};
}

inline json to_json(const Configuration& c) {
  json j{{"config_id", c.id()},
         {"field_strength", c.field_strength},
         {"n_series", c.n_series},
         {"ga_weeks", c.ga_weeks},
         {"repeats", c.repeats},
         {"seed", c.seed},
         {"grid_size", c.grid_size},
         {"motion", motion_json(c.motion)}};
  j["registration_error"] = c.registration_error ? motion_json(*c.registration_error) : json(nullptr);
  return j;
}

/// Seeds derived from a configuration's base seed, for the manifest.
inline json derived_seeds(const Configuration& c) {
  json subsets = json::array();
  for (int r = 0; r < c.repeats; ++r)
    subsets.push_back(derive_seed(c.seed, "subset", static_cast<std::uint64_t>(r)));
  return {{"base", c.seed},
          {"phantom", derive_seed(c.seed, "phantom")},
          {"acquisition", derive_seed(c.seed, "acquisition")},
          {"subsets", subsets}};
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class Protocol { setting, subject, ga_sweep };

inline const char* to_string(Protocol p) {
  return p == Protocol::setting ? "setting" : p == Protocol::subject ? "subject" : "ga-sweep";
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "setting")
    return Protocol::setting;
  if (s == "subject")
    return Protocol::subject;
  if (s == "ga-sweep")
    return Protocol::ga_sweep;
  throw InputError("unknown protocol '" + s + "'");
}

/// Everything a `tune` run needs.
struct ExperimentConfig {
  Protocol protocol = Protocol::setting;
  Configuration configuration;
  std::optional<ExamDescriptor> exam;
  std::vector<double> ga_list{22, 26, 30, 34};
  int phantoms = 1; // independent phantom instances (setting protocol)
  RegularizerKind regularizer = RegularizerKind::tikhonov1;
  GridSpec grid = make_grid(GridKind::tikhonov_style);
  SolverConfig solver = SolverConfig::defaults(RegularizerKind::tikhonov1);
  std::string output_dir = "srtune-out";
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const {
    configuration.validate();
    grid.validate();
    solver.validate();
    if (phantoms < 1)
      throw InputError("experiment: phantoms must be >= 1");
    if (workers < 1)
      throw InputError("experiment: workers must be >= 1");
    if (protocol == Protocol::subject && !exam)
      throw InputError("experiment: the subject protocol needs an exam descriptor");
    if (exam)
      exam->validate();
    if (protocol == Protocol::ga_sweep && ga_list.empty())
      throw InputError("experiment: empty GA list");
    if (output_dir.empty())
      throw InputError("experiment: empty output directory");
  }
};

inline json to_json(const ExperimentConfig& e) {
  json j{{"protocol", to_string(e.protocol)},
         {"configuration", to_json(e.configuration)},
         {"phantoms", e.phantoms},
         {"regularizer", to_string(e.regularizer)},
         {"grid", to_json(e.grid)},
         {"solver",
          {{"max_iters", e.solver.max_iters},
           {"tol", e.solver.tol},
           {"init", e.solver.init == SolverInit::zeros ? "zeros" : "backprojection"}}},
         {"output_dir", e.output_dir},
         {"seed", e.seed},
         {"workers", e.workers}};
  j["exam"] = e.exam ? to_json(*e.exam) : json(nullptr);
  j["ga_list"] = e.protocol == Protocol::ga_sweep ? json(e.ga_list) : json(nullptr);
  return j;
}

/// Reads an experiment file. `base_dir` resolves a relative "exam_path".
/// Absent fields keep their defaults.
inline ExperimentConfig parse_experiment_config(const json& j, const std::string& base_dir = ".") {
  static const std::set<std::string> known{"protocol", "configuration", "exam",        "exam_path", "ga_list",
                                           "phantoms", "regularizer",   "grid",        "solver",    "output_dir",
                                           "seed",     "workers"};
  if (!j.is_object())
    throw InputError("experiment: expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw InputError("experiment: unknown field '" + key + "'");
  ExperimentConfig e;
  try {
    e.protocol = parse_protocol(j.value("protocol", std::string("setting")));
    e.regularizer = parse_regularizer(j.value("regularizer", std::string("tikhonov1")));
    e.seed = j.value("seed", std::uint64_t{0});
    e.workers = j.value("workers", 1);
    e.phantoms = j.value("phantoms", 1);
    e.output_dir = j.value("output_dir", e.output_dir);
    if (j.contains("configuration")) {
      const json& c = j.at("configuration");
      e.configuration.field_strength = c.value("field_strength", 1.5);
      e.configuration.n_series = c.value("n_series", 3);
      e.configuration.ga_weeks = c.value("ga_weeks", 30.0);
      e.configuration.repeats = c.value("repeats", 3);
      e.configuration.grid_size = c.value("grid_size", 64);
      e.configuration.motion =
          MotionConfig::preset(parse_motion_amplitude(c.value("motion_amplitude", std::string("little"))));
    }
    e.configuration.seed = e.seed;
    if (j.contains("exam") && !j.at("exam").is_null())
      e.exam = parse_exam_descriptor(j.at("exam"));
    else if (j.contains("exam_path") && !j.at("exam_path").is_null())
      e.exam = parse_exam_descriptor(
          read_json((std::filesystem::path(base_dir) / j.at("exam_path").get<std::string>()).string()));
    if (j.contains("ga_list"))
      e.ga_list = j.at("ga_list").get<std::vector<double>>();
    e.solver = SolverConfig::defaults(e.regularizer);
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      e.solver.max_iters = s.value("max_iters", e.solver.max_iters);
      e.solver.tol = s.value("tol", e.solver.tol);
      const std::string init = s.value("init", std::string("backprojection"));
      if (init != "zeros" && init != "backprojection")
        throw InputError("experiment: solver init must be zeros or backprojection");
      e.solver.init = init == "zeros" ? SolverInit::zeros : SolverInit::backprojection;
    }
    e.grid = make_grid(grid_kind_for(e.regularizer));
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (g.is_string()) {
        e.grid = make_grid(parse_grid_kind(g.get<std::string>()));
      } else {
        e.grid = custom_grid(g.at("values").get<std::vector<double>>(), g.at("default_alpha").get<double>());
      }
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("experiment: ") + ex.what());
  }
  e.validate();
  return e;
}

// ---------------------------------------------------------------------------
// Simulated subject directories

inline json rigid_json(const RigidTransform& t) {
  return {{"rotation_deg", {t.rotation_deg[0], t.rotation_deg[1], t.rotation_deg[2]}},
          {"translation_mm", {t.translation_mm[0], t.translation_mm[1], t.translation_mm[2]}}};
}

inline RigidTransform rigid_from_json(const json& j) {
  RigidTransform t;
  for (int a = 0; a < 3; ++a) {
    t.rotation_deg[a] = j.at("rotation_deg").at(a).get<double>();
    t.translation_mm[a] = j.at("translation_mm").at(a).get<double>();
  }
  return t;
}

/// Sidecar carrying what the NIfTI stack cannot: motion and acquisition facts.
inline json series_sidecar(const LRSeries& s) {
  json motion = json::array();
  for (const auto& t : s.motion)
    motion.push_back(rigid_json(t));
  std::vector<bool> corrupted(s.corrupted.begin(), s.corrupted.end());
  return {{"orientation", to_string(s.orientation)},
          {"series_index", s.series_index},
          {"slice_thickness", s.slice_thickness},
          {"motion_center", {s.motion_center[0], s.motion_center[1], s.motion_center[2]}},
          {"motion", motion},
          {"corrupted", corrupted}};
}

inline Volume3D series_volume(const LRSeries& s) {
  Volume3D v(s.grid);
  v.data = s.stacked();
  return v;
}

inline LRSeries series_from_files(const Volume3D& stack, const json& sidecar) {
  LRSeries s;
  try {
    s.orientation = parse_orientation(sidecar.at("orientation").get<std::string>());
    s.series_index = sidecar.at("series_index").get<int>();
    s.slice_thickness = sidecar.at("slice_thickness").get<double>();
    for (int a = 0; a < 3; ++a)
      s.motion_center[a] = sidecar.at("motion_center").at(a).get<double>();
    for (const auto& t : sidecar.at("motion"))
      s.motion.push_back(rigid_from_json(t));
    for (const auto& c : sidecar.at("corrupted"))
      s.corrupted.push_back(c.get<bool>());
  } catch (const json::exception& e) {
    throw InputError(std::string("series sidecar: ") + e.what());
  }
  s.grid = stack.geom;
  const int nu = s.grid.dims[0], nv = s.grid.dims[1];
  for (int k = 0; k < s.grid.dims[2]; ++k) {
    Slice2D slice(nu, nv);
    const std::size_t base = static_cast<std::size_t>(k) * nu * nv;
    std::copy(stack.data.begin() + static_cast<std::ptrdiff_t>(base),
              stack.data.begin() + static_cast<std::ptrdiff_t>(base + slice.data.size()), slice.data.begin());
    s.slices.push_back(std::move(slice));
  }
  s.validate();
  return s;
}

inline std::string series_stem(std::size_t i, const LRSeries& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "series_%02zu_%s", i, to_string(s.orientation));
  return buf;
}

/// Writes reference.nii, one stack plus sidecar per series and subject.json.
/// Volumes are stored as float64 so reconstruction from disk sees the
/// simulated values exactly.
inline json write_subject(const SimulatedSubject& subject, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  write_volume(subject.reference, (root / "reference.nii").string(), NiftiType::float64);
  json files = json::array();
  for (std::size_t i = 0; i < subject.series.size(); ++i) {
    const LRSeries& s = subject.series[i];
    const std::string stem = series_stem(i, s);
    write_volume(series_volume(s), (root / (stem + ".nii")).string(), NiftiType::float64);
    write_json((root / (stem + ".json")).string(), series_sidecar(s));
    files.push_back({{"volume", stem + ".nii"}, {"sidecar", stem + ".json"}});
  }
  const SequenceParams& q = subject.seq;
  json j{{"reference", "reference.nii"},
         {"series", files},
         {"sequence",
          {{"field_strength", q.field_strength},
           {"tr_ms", q.tr_ms},
           {"te_ms", q.te_ms},
           {"in_plane", q.in_plane},
           {"slice_thickness", q.slice_thickness},
           {"slice_spacing", q.slice_spacing},
           {"noise_sd", q.noise_sd},
           {"fov_shift", q.fov_shift}}}};
  write_json((root / "subject.json").string(), j);
  return j;
}

/// Reads a directory written by write_subject.
inline SimulatedSubject read_subject(const std::string& dir) {
  const std::filesystem::path root(dir);
  const json j = read_json((root / "subject.json").string());
  SimulatedSubject s;
  try {
    const json& q = j.at("sequence");
    s.seq.field_strength = q.at("field_strength").get<double>();
    s.seq.tr_ms = q.at("tr_ms").get<double>();
    s.seq.te_ms = q.at("te_ms").get<double>();
    s.seq.in_plane = q.at("in_plane").get<double>();
    s.seq.slice_thickness = q.at("slice_thickness").get<double>();
    s.seq.slice_spacing = q.at("slice_spacing").get<double>();
    s.seq.noise_sd = q.at("noise_sd").get<double>();
    s.seq.fov_shift = q.at("fov_shift").get<double>();
    s.reference = read_volume((root / j.at("reference").get<std::string>()).string());
    for (const auto& f : j.at("series"))
      s.series.push_back(series_from_files(read_volume((root / f.at("volume").get<std::string>()).string()),
                                           read_json((root / f.at("sidecar").get<std::string>()).string())));
  } catch (const json::exception& e) {
    throw InputError(std::string("subject.json: ") + e.what());
  }
  s.mask = support_mask(s.reference);
  return s;
}

} // namespace srtune

#endif // SRTUNE_IO_HPP
