#ifndef SRTUNE_TUNER_HPP
#define SRTUNE_TUNER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "srtune/acquisition.hpp"
#include "srtune/errors.hpp"
#include "srtune/forward_model.hpp"
#include "srtune/metrics.hpp"
#include "srtune/parallel.hpp"
#include "srtune/phantom.hpp"
#include "srtune/rng.hpp"
#include "srtune/series.hpp"
#include "srtune/solvers.hpp"

namespace srtune {

// ---------------------------------------------------------------------------
// Grids

enum class GridKind { tv_style, tikhonov_style, custom };

inline const char* to_string(GridKind k) {
  switch (k) {
  case GridKind::tv_style:
    return "tv-style";
  case GridKind::tikhonov_style:
    return "tikhonov-style";
  case GridKind::custom:
    break;
  }
  return "custom";
}

inline GridKind parse_grid_kind(const std::string& s) {
  if (s == "tv-style" || s == "tv")
    return GridKind::tv_style;
  if (s == "tikhonov-style" || s == "tikhonov" || s == "tikhonov1")
    return GridKind::tikhonov_style;
  if (s == "custom")
    return GridKind::custom;
  throw InputError("unknown grid kind '" + s + "'");
}

inline GridKind grid_kind_for(RegularizerKind r) {
  return r == RegularizerKind::tv ? GridKind::tv_style : GridKind::tikhonov_style;
}

/// Ordered set of candidate α values with the method default among them.
struct GridSpec {
  std::vector<double> values;
  double default_alpha = 0.0;
  GridKind label = GridKind::custom;

  std::size_t size() const { return values.size(); }

  void validate() const {
    if (values.empty())
      throw InputError("grid: no values");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0) || !std::isfinite(values[i]))
        throw DomainError("grid: values must be positive and finite");
      if (i > 0 && !(values[i] > values[i - 1]))
        throw InputError("grid: values must be strictly increasing");
    }
    index_of(default_alpha);
  }

  std::size_t index_of(double alpha) const {
    const auto it = std::find(values.begin(), values.end(), alpha);
    if (it == values.end())
      throw InputError("grid: value not in grid");
    return static_cast<std::size_t>(it - values.begin());
  }
};

/// Sorted, deduplicated grid with `default_alpha` inserted.
inline GridSpec custom_grid(std::vector<double> values, double default_alpha) {
  values.push_back(default_alpha);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  GridSpec g{std::move(values), default_alpha, GridKind::custom};
  g.validate();
  return g;
}

/// tikhonov-style: 10 values geometrically spaced on [1e-3, 2] plus the
/// default 0.01. tv-style: reciprocals of {0.75, 1, 1.5, 2, 2.5, 3, 3.5, 5},
/// default 1/0.75.
inline GridSpec make_grid(GridKind kind) {
  GridSpec g;
  g.label = kind;
  if (kind == GridKind::tikhonov_style) {
    const double lo = 1e-3, hi = 2.0;
    for (int i = 0; i < 10; ++i)
      g.values.push_back(i == 0 ? lo : i == 9 ? hi : lo * std::pow(hi / lo, i / 9.0));
    g.default_alpha = 0.01;
    g.values.push_back(g.default_alpha);
  } else if (kind == GridKind::tv_style) {
    for (double lambda : {0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 5.0})
      g.values.push_back(1.0 / lambda);
    g.default_alpha = 1.0 / 0.75;
  } else {
    throw InputError("make_grid: custom grids need explicit values");
  }
  std::sort(g.values.begin(), g.values.end());
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Configurations and simulated subjects

inline constexpr int simulated_series_count = 9;

/// One acquisition setting of the setting-wise protocol.
struct Configuration {
  double field_strength = 1.5;
  int n_series = 3;
  double ga_weeks = 30.0;
  int repeats = 3;
  std::uint64_t seed = 0;
  int grid_size = 64; // HR voxels per axis, voxel = in-plane resolution
  MotionConfig motion{};
  std::optional<MotionConfig> registration_error; // perturbs the motion used in H
  std::string tag;                                 // appended to id(), e.g. a phantom instance

  std::string id() const {
    std::ostringstream os;
    os << field_key(field_strength) << "T-" << n_series << "s";
    if (!tag.empty())
      os << "-" << tag;
    return os.str();
  }

  void validate() const {
    field_key(field_strength);
    if (n_series < 1 || n_series > simulated_series_count)
      throw InputError("configuration: n_series must lie in [1, 9]");
    if (repeats < 1)
      throw InputError("configuration: repeats must be >= 1");
    if (grid_size < 8)
      throw InputError("configuration: grid_size must be >= 8");
    if (!(ga_weeks >= detail::phantom_ga_min && ga_weeks <= detail::phantom_ga_max))
      throw DomainError("configuration: gestational age must lie in [21, 38] weeks");
    motion.validate();
    if (registration_error)
      registration_error->validate();
  }
};

struct SeriesRequest {
  Orientation orientation = Orientation::axial;
  std::optional<int> n_slices;
};

/// Phantom reference, evaluation mask and simulated LR series of one subject.
struct SimulatedSubject {
  SequenceParams seq;
  Volume3D reference;
  Mask mask;
  std::vector<LRSeries> series;
};

/// Renders a unit-range reference on an N³ grid at the in-plane resolution
/// and simulates the requested series. Same-orientation series get
/// consecutive FOV-shift indices in request order.
inline SimulatedSubject simulate_subject(double field_strength, double ga_weeks, int grid_size,
                                         const std::vector<SeriesRequest>& requests, const MotionConfig& motion,
                                         std::uint64_t phantom_seed, std::uint64_t acquisition_seed,
                                         int workers = 1) {
  if (requests.empty())
    throw InputError("simulate_subject: no series requested");
  SimulatedSubject s;
  s.seq = SequenceParams::at_field(field_strength);
  const Geometry grid = Geometry::centered({grid_size, grid_size, grid_size}, s.seq.in_plane);
  const LabelVolume labels = generate_phantom(ga_weeks, grid, phantom_seed);
  s.reference = reference_hr(labels, default_tissue_table(field_strength), s.seq);
  normalize_unit_range(s.reference);
  s.mask = support_mask(s.reference);

  std::vector<int> index(requests.size());
  int per_orientation[3] = {0, 0, 0};
  for (std::size_t r = 0; r < requests.size(); ++r)
    index[r] = per_orientation[static_cast<int>(requests[r].orientation)]++;
  MotionConfig mc = motion;
  mc.seed = derive_seed(acquisition_seed, "motion");
  const std::uint64_t noise_seed = derive_seed(acquisition_seed, "noise");
  s.series.resize(requests.size());
  parallel_for(requests.size(), workers, [&](std::size_t r) {
    SimulationOptions opts;
    opts.n_slices = requests[r].n_slices;
    s.series[r] = simulate_lr_series(s.reference, requests[r].orientation, s.seq, mc, index[r], noise_seed, opts);
  });
  return s;
}

/// The nine series of a setting-wise run: three per orientation.
inline SimulatedSubject prepare_setting(const Configuration& config, int workers = 1) {
  config.validate();
  std::vector<SeriesRequest> requests;
  for (int i = 0; i < simulated_series_count / 3; ++i)
    for (Orientation o : {Orientation::axial, Orientation::coronal, Orientation::sagittal})
      requests.push_back({o, std::nullopt});
  return simulate_subject(config.field_strength, config.ga_weeks, config.grid_size, requests, config.motion,
                          derive_seed(config.seed, "phantom"), derive_seed(config.seed, "acquisition"), workers);
}

/// Picks n series balanced across orientations: n/3 from each, the remainder
/// from randomly chosen distinct orientations. Returned indices are sorted.
inline std::vector<int> balanced_subset(const std::vector<LRSeries>& series, int n, Rng& rng) {
  std::vector<int> by_orientation[3];
  for (std::size_t i = 0; i < series.size(); ++i)
    by_orientation[static_cast<int>(series[i].orientation)].push_back(static_cast<int>(i));
  int take[3] = {n / 3, n / 3, n / 3};
  int order[3] = {0, 1, 2};
  for (int i = 2; i > 0; --i)
    std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  for (int e = 0; e < n % 3; ++e)
    ++take[order[e]];
  std::vector<int> chosen;
  for (int o = 0; o < 3; ++o) {
    auto& pool = by_orientation[o];
    if (static_cast<int>(pool.size()) < take[o])
      throw InputError("balanced_subset: not enough series of orientation " +
                       std::string(to_string(static_cast<Orientation>(o))));
    for (int t = 0; t < take[o]; ++t) {
      const std::size_t pick = static_cast<std::size_t>(t) + rng.below(pool.size() - static_cast<std::size_t>(t));
      std::swap(pool[static_cast<std::size_t>(t)], pool[pick]);
      chosen.push_back(pool[static_cast<std::size_t>(t)]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

/// Operator and stacked data for one set of series.
struct ReconstructionProblem {
  ForwardOperator op;
  std::vector<double> y;
  std::vector<int> series_used;
  std::optional<double> h_norm; // filled when a TV solve needs it
};

inline ReconstructionProblem make_problem(const SimulatedSubject& subject, const std::vector<int>& chosen,
                                          const std::optional<MotionConfig>& registration_error = std::nullopt,
                                          int workers = 1) {
  std::vector<const LRSeries*> used;
  for (int i : chosen)
    used.push_back(&subject.series.at(static_cast<std::size_t>(i)));
  ReconstructionProblem p;
  p.op = build_operator(used, subject.reference.geom,
                        PSFSpec::for_acquisition(subject.seq.in_plane, subject.seq.slice_thickness),
                        registration_error, workers);
  for (const LRSeries* s : used) {
    const std::vector<double> stacked = s->stacked();
    p.y.insert(p.y.end(), stacked.begin(), stacked.end());
  }
  p.series_used = chosen;
  return p;
}

// ---------------------------------------------------------------------------
// Results

enum class Metric { psnr, ssim };

inline const char* to_string(Metric m) { return m == Metric::psnr ? "psnr" : "ssim"; }

struct TuneRow {
  std::string config_id;
  double field_strength = 1.5;
  int n_series = 0;
  double ga_weeks = 0.0;
  RegularizerKind regularizer = RegularizerKind::tv;
  double alpha = 0.0;
  int repeat = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;

  double metric(Metric m) const { return m == Metric::psnr ? psnr_db : ssim; }
};

struct TuneResult {
  std::string config_id;
  Configuration config;
  GridSpec grid;
  RegularizerKind regularizer = RegularizerKind::tv;
  std::vector<TuneRow> rows; // ordered by (repeat, α)
  double alpha_star_psnr = 0.0;
  double alpha_star_ssim = 0.0;
  double default_alpha = 0.0;

  double alpha_star(Metric m) const { return m == Metric::psnr ? alpha_star_psnr : alpha_star_ssim; }
};

/// Mean of `metric` over the rows with this α.
inline double mean_metric(const std::vector<TuneRow>& rows, double alpha, Metric metric) {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows)
    if (r.alpha == alpha) {
      sum += r.metric(metric);
      ++n;
    }
  if (n == 0)
    throw InputError("mean_metric: no rows for this alpha");
  return sum / n;
}

/// α maximising the metric averaged over repeats; ties go to the smaller α.
inline double select_alpha(const std::vector<TuneRow>& rows, Metric metric) {
  if (rows.empty())
    throw InputError("select_alpha: no rows");
  std::map<double, std::pair<double, int>> sums;
  for (const auto& r : rows) {
    auto& [s, n] = sums[r.alpha];
    s += r.metric(metric);
    ++n;
  }
  double best_alpha = sums.begin()->first;
  double best = -std::numeric_limits<double>::infinity();
  bool first = true;
  for (const auto& [alpha, sn] : sums) {
    const double mean = sn.first / sn.second;
    if (first || mean > best) {
      best = mean;
      best_alpha = alpha;
      first = false;
    }
  }
  return best_alpha;
}

inline double select_alpha(const TuneResult& result, Metric metric) { return select_alpha(result.rows, metric); }

/// Mean metric at α* minus mean metric at the default α.
inline double metric_gain(const TuneResult& result, Metric metric) {
  return mean_metric(result.rows, result.alpha_star(metric), metric) -
         mean_metric(result.rows, result.default_alpha, metric);
}

struct TuneOptions {
  int workers = 1;
  std::optional<SolverConfig> solver; // α is overwritten; default SolverConfig::defaults(reg)
};

namespace detail {

inline SolverConfig solver_template(RegularizerKind reg, const TuneOptions& opts) {
  SolverConfig c = opts.solver.value_or(SolverConfig::defaults(reg));
  c.validate();
  return c;
}

// Reconstructs at every grid value and scores against the reference.
inline std::vector<TuneRow> run_grid(ReconstructionProblem& problem, const SimulatedSubject& subject,
                                     const GridSpec& grid, RegularizerKind reg, const SolverConfig& base,
                                     const TuneRow& row_template, int workers) {
  if (reg == RegularizerKind::tv && !problem.h_norm)
    problem.h_norm = estimate_operator_norm(problem.op);
  std::vector<TuneRow> rows(grid.size(), row_template);
  parallel_for(grid.size(), workers, [&](std::size_t a) {
    SolverConfig cfg = base;
    cfg.alpha = grid.values[a];
    SolveReport rep;
    try {
      rep = solve(problem.op, problem.y, subject.reference.geom, reg, cfg, problem.h_norm);
    } catch (const DivergenceError& e) {
      std::ostringstream os;
      os << e.what() << " (alpha=" << cfg.alpha << ", repeat=" << row_template.repeat << ")";
      throw DivergenceError(e.iteration(), os.str());
    }
    rows[a].alpha = cfg.alpha;
    rows[a].psnr_db = psnr(rep.x, subject.reference, subject.mask);
    rows[a].ssim = ssim(rep.x, subject.reference, subject.mask);
  });
  return rows;
}

inline void finish_result(TuneResult& r) {
  r.alpha_star_psnr = select_alpha(r.rows, Metric::psnr);
  r.alpha_star_ssim = select_alpha(r.rows, Metric::ssim);
  r.default_alpha = r.grid.default_alpha;
}

} // namespace detail

/// Setting-wise protocol: one phantom and nine simulated series; each repeat
/// reconstructs an orientation-balanced subset of n_series at every grid
/// value. Motion and noise are fixed per phantom; repeats resample only the
/// subset.
inline TuneResult tune_setting(const Configuration& config, const GridSpec& grid, RegularizerKind reg,
                               const TuneOptions& opts = {}) {
  config.validate();
  grid.validate();
  const SolverConfig base = detail::solver_template(reg, opts);
  const SimulatedSubject subject = prepare_setting(config, opts.workers);

  TuneResult result;
  result.config_id = config.id();
  result.config = config;
  result.grid = grid;
  result.regularizer = reg;
  for (int rep = 0; rep < config.repeats; ++rep) {
    Rng rng(derive_seed(config.seed, "subset", static_cast<std::uint64_t>(rep)));
    const std::vector<int> chosen = balanced_subset(subject.series, config.n_series, rng);
    ReconstructionProblem problem = make_problem(subject, chosen, config.registration_error, opts.workers);
    TuneRow tmpl{result.config_id, config.field_strength, config.n_series, config.ga_weeks, reg, 0.0, rep, 0.0, 0.0};
    const auto rows = detail::run_grid(problem, subject, grid, reg, base, tmpl, opts.workers);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  detail::finish_result(result);
  return result;
}

// ---------------------------------------------------------------------------
// Subject-wise protocol

struct ExamSeries {
  Orientation orientation = Orientation::axial;
  std::optional<int> slices;
};

/// Exam-specific acquisition to mimic: GA, field strength, series layout and
/// motion amplitude.
struct ExamDescriptor {
  std::string exam_id = "exam";
  double ga_weeks = 30.0;
  double field_strength = 1.5;
  MotionAmplitude motion = MotionAmplitude::little;
  std::vector<ExamSeries> series;
  std::uint64_t seed = 0;
  int repeats = 1;
  int grid_size = 64;

  void validate() const {
    if (exam_id.empty())
      throw DescriptorError("exam descriptor: empty exam_id");
    if (!(ga_weeks >= detail::phantom_ga_min && ga_weeks <= detail::phantom_ga_max))
      throw DescriptorError("exam descriptor: ga_weeks must lie in [21, 38]");
    if (field_strength != 1.5 && field_strength != 3.0)
      throw DescriptorError("exam descriptor: field_strength must be 1.5 or 3.0");
    if (series.empty() || series.size() > static_cast<std::size_t>(simulated_series_count))
      throw DescriptorError("exam descriptor: between 1 and 9 series required");
    for (const auto& s : series)
      if (s.slices && *s.slices < 1)
        throw DescriptorError("exam descriptor: slice count must be >= 1");
    if (repeats < 1)
      throw DescriptorError("exam descriptor: repeats must be >= 1");
    if (grid_size < 8)
      throw DescriptorError("exam descriptor: grid_size must be >= 8");
  }
};

inline ExamDescriptor parse_exam_descriptor(const nlohmann::json& j) {
  static const std::set<std::string> known{"exam_id", "ga_weeks", "field_strength", "motion_amplitude",
                                           "series", "seed", "repeats", "grid_size"};
  if (!j.is_object())
    throw DescriptorError("exam descriptor: expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw DescriptorError("exam descriptor: unknown field '" + key + "'");
  ExamDescriptor d;
  try {
    for (const char* required : {"ga_weeks", "field_strength", "series"})
      if (!j.contains(required))
        throw DescriptorError(std::string("exam descriptor: missing field '") + required + "'");
    d.exam_id = j.value("exam_id", d.exam_id);
    d.ga_weeks = j.at("ga_weeks").get<double>();
    d.field_strength = j.at("field_strength").get<double>();
    d.motion = parse_motion_amplitude(j.value("motion_amplitude", std::string("little")));
    d.seed = j.value("seed", std::uint64_t{0});
    d.repeats = j.value("repeats", 1);
    d.grid_size = j.value("grid_size", 64);
    if (!j.at("series").is_array())
      throw DescriptorError("exam descriptor: 'series' must be an array");
    for (const auto& s : j.at("series")) {
      ExamSeries es;
      if (s.is_string()) {
        es.orientation = parse_orientation(s.get<std::string>());
      } else {
        es.orientation = parse_orientation(s.at("orientation").get<std::string>());
        if (s.contains("slices"))
          es.slices = s.at("slices").get<int>();
      }
      d.series.push_back(es);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DescriptorError(std::string("exam descriptor: ") + e.what());
  }
  d.validate();
  return d;
}

inline nlohmann::json to_json(const ExamDescriptor& d) {
  nlohmann::json series = nlohmann::json::array();
  for (const auto& s : d.series) {
    nlohmann::json e{{"orientation", to_string(s.orientation)}};
    if (s.slices)
      e["slices"] = *s.slices;
    series.push_back(e);
  }
  return {{"exam_id", d.exam_id},   {"ga_weeks", d.ga_weeks}, {"field_strength", d.field_strength},
          {"motion_amplitude", to_string(d.motion)}, {"series", series}, {"seed", d.seed},
          {"repeats", d.repeats},   {"grid_size", d.grid_size}};
}

/// Descriptor mimicking a setting: balanced orientations, full-coverage stacks.
inline ExamDescriptor descriptor_from_configuration(const Configuration& config, const std::string& exam_id = "") {
  config.validate();
  ExamDescriptor d;
  d.exam_id = exam_id.empty() ? config.id() : exam_id;
  d.ga_weeks = config.ga_weeks;
  d.field_strength = config.field_strength;
  d.motion = config.motion.amplitude;
  d.seed = config.seed;
  d.repeats = config.repeats;
  d.grid_size = config.grid_size;
  const Orientation cycle[3] = {Orientation::axial, Orientation::coronal, Orientation::sagittal};
  for (int i = 0; i < config.n_series; ++i)
    d.series.push_back({cycle[i % 3], std::nullopt});
  return d;
}

/// Subject-wise protocol: simulates exactly the exam's series at its GA and
/// field strength and runs the grid. Each repeat draws fresh motion and
/// noise on the same phantom.
inline TuneResult tune_subject(const ExamDescriptor& exam, const GridSpec& grid, RegularizerKind reg,
                               const TuneOptions& opts = {}) {
  exam.validate();
  grid.validate();
  const SolverConfig base = detail::solver_template(reg, opts);
  std::vector<SeriesRequest> requests;
  for (const auto& s : exam.series)
    requests.push_back({s.orientation, s.slices});

  TuneResult result;
  result.config_id = exam.exam_id;
  result.config.field_strength = exam.field_strength;
  result.config.n_series = static_cast<int>(exam.series.size());
  result.config.ga_weeks = exam.ga_weeks;
  result.config.repeats = exam.repeats;
  result.config.seed = exam.seed;
  result.config.grid_size = exam.grid_size;
  result.config.motion = MotionConfig::preset(exam.motion);
  result.grid = grid;
  result.regularizer = reg;
  std::vector<int> all(exam.series.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = static_cast<int>(i);
  for (int rep = 0; rep < exam.repeats; ++rep) {
    const SimulatedSubject subject =
        simulate_subject(exam.field_strength, exam.ga_weeks, exam.grid_size, requests, result.config.motion,
                         derive_seed(exam.seed, "phantom"),
                         derive_seed(exam.seed, "exam-acquisition", static_cast<std::uint64_t>(rep)), opts.workers);
    ReconstructionProblem problem = make_problem(subject, all, std::nullopt, opts.workers);
    TuneRow tmpl{result.config_id, exam.field_strength, result.config.n_series, exam.ga_weeks, reg, 0.0, rep, 0.0, 0.0};
    const auto rows = detail::run_grid(problem, subject, grid, reg, base, tmpl, opts.workers);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  detail::finish_result(result);
  return result;
}

// ---------------------------------------------------------------------------
// GA sweep

struct GaSweepRow {
  double ga_weeks = 0.0;
  double alpha_star_psnr = 0.0;
  double alpha_star_ssim = 0.0;
};

struct GaSweepResult {
  std::vector<GaSweepRow> table;
  std::vector<TuneResult> runs;
};

/// One setting-wise run per GA, all else taken from `base`.
inline GaSweepResult ga_sweep(const std::vector<double>& ga_list, const Configuration& base, const GridSpec& grid,
                              RegularizerKind reg, const TuneOptions& opts = {}) {
  if (ga_list.empty())
    throw InputError("ga_sweep: empty GA list");
  GaSweepResult out;
  for (double ga : ga_list) {
    Configuration c = base;
    c.ga_weeks = ga;
    TuneResult r = tune_setting(c, grid, reg, opts);
    out.table.push_back({ga, r.alpha_star_psnr, r.alpha_star_ssim});
    out.runs.push_back(std::move(r));
  }
  return out;
}

} // namespace srtune

#endif // SRTUNE_TUNER_HPP
