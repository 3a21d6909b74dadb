#include <gtest/gtest.h>

#include <cmath>

#include "srtune/tuner.hpp"

using namespace srtune;

namespace {

Configuration small_config(std::uint64_t seed = 1, int n_series = 3) {
  Configuration c;
  c.grid_size = 40;
  c.repeats = 2;
  c.seed = seed;
  c.n_series = n_series;
  return c;
}

TuneRow row(double alpha, int repeat, double psnr, double ssim) {
  TuneRow r;
  r.alpha = alpha;
  r.repeat = repeat;
  r.psnr_db = psnr;
  r.ssim = ssim;
  return r;
}

void expect_same_rows(const std::vector<TuneRow>& a, const std::vector<TuneRow>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].alpha, b[i].alpha);
    EXPECT_EQ(a[i].repeat, b[i].repeat);
    EXPECT_EQ(a[i].psnr_db, b[i].psnr_db);
    EXPECT_EQ(a[i].ssim, b[i].ssim);
  }
}

} // namespace

TEST(Grid, TikhonovStyle) {
  const GridSpec g = make_grid(GridKind::tikhonov_style);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g.values.front(), 0.001);
  EXPECT_EQ(g.values.back(), 2.0);
  EXPECT_EQ(g.default_alpha, 0.01);
  EXPECT_NO_THROW(g.index_of(0.01));
  std::vector<double> geometric;
  for (double v : g.values)
    if (v != 0.01)
      geometric.push_back(v);
  ASSERT_EQ(geometric.size(), 10u);
  const double ratio = std::pow(2.0 / 1e-3, 1.0 / 9.0);
  EXPECT_NEAR(ratio, 2.3269, 1e-4);
  for (std::size_t i = 1; i < geometric.size(); ++i)
    EXPECT_NEAR(geometric[i] / geometric[i - 1], ratio, 1e-12);
  EXPECT_TRUE(std::is_sorted(g.values.begin(), g.values.end()));
}

TEST(Grid, TvStyle) {
  const GridSpec g = make_grid(GridKind::tv_style);
  ASSERT_EQ(g.size(), 8u);
  EXPECT_EQ(g.default_alpha, 1.0 / 0.75);
  EXPECT_NO_THROW(g.index_of(4.0 / 3.0));
  EXPECT_NO_THROW(g.index_of(0.2));
  EXPECT_EQ(g.values.front(), 0.2);
  EXPECT_EQ(g.values.back(), 4.0 / 3.0);
  for (double lambda : {0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 5.0})
    EXPECT_NO_THROW(g.index_of(1.0 / lambda));
}

TEST(Grid, CustomGridInsertsDefaultAndValidates) {
  const GridSpec g = custom_grid({0.5, 0.1, 0.3}, 0.2);
  EXPECT_EQ(g.values, (std::vector<double>{0.1, 0.2, 0.3, 0.5}));
  EXPECT_THROW(custom_grid({-1.0}, 0.5), DomainError);
  EXPECT_THROW(make_grid(GridKind::custom), InputError);
  EXPECT_THROW(g.index_of(0.25), InputError);
  EXPECT_EQ(grid_kind_for(RegularizerKind::tv), GridKind::tv_style);
  EXPECT_EQ(parse_grid_kind("tikhonov-style"), GridKind::tikhonov_style);
}

TEST(SelectAlpha, PicksLargerMean) {
  const std::vector<TuneRow> rows{row(0.01, 0, 17.3, 0.5), row(0.1, 0, 20.8, 0.6)};
  EXPECT_EQ(select_alpha(rows, Metric::psnr), 0.1);
}

TEST(SelectAlpha, TiesGoToSmallestAlpha) {
  const std::vector<TuneRow> rows{row(0.5, 0, 3, 0.2), row(0.05, 0, 3, 0.2), row(0.2, 0, 3, 0.2)};
  EXPECT_EQ(select_alpha(rows, Metric::psnr), 0.05);
  EXPECT_EQ(select_alpha(rows, Metric::ssim), 0.05);
}

TEST(SelectAlpha, MetricsMayDisagree) {
  const std::vector<TuneRow> rows{row(0.01, 0, 20, 0.70), row(0.1, 0, 19, 0.80), row(0.01, 1, 21, 0.72),
                                  row(0.1, 1, 19.5, 0.79)};
  EXPECT_EQ(select_alpha(rows, Metric::psnr), 0.01);
  EXPECT_EQ(select_alpha(rows, Metric::ssim), 0.1);
  EXPECT_DOUBLE_EQ(mean_metric(rows, 0.1, Metric::psnr), 19.25);
}

TEST(SelectAlpha, AveragesOverRepeats) {
  const std::vector<TuneRow> rows{row(1, 0, 10, 0), row(2, 0, 12, 0), row(1, 1, 14, 0), row(2, 1, 11, 0)};
  EXPECT_EQ(select_alpha(rows, Metric::psnr), 1.0);
  EXPECT_THROW(select_alpha(std::vector<TuneRow>{}, Metric::psnr), InputError);
}

TEST(BalancedSubset, DrawsEvenlyAcrossOrientations) {
  std::vector<LRSeries> series(9);
  for (std::size_t i = 0; i < 9; ++i)
    series[i].orientation = static_cast<Orientation>(i % 3);
  for (int n = 1; n <= 9; ++n)
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng rng(s);
      const auto chosen = balanced_subset(series, n, rng);
      ASSERT_EQ(chosen.size(), static_cast<std::size_t>(n));
      EXPECT_TRUE(std::is_sorted(chosen.begin(), chosen.end()));
      int per[3] = {0, 0, 0};
      for (int c : chosen)
        ++per[static_cast<int>(series[static_cast<std::size_t>(c)].orientation)];
      for (int o = 0; o < 3; ++o) {
        EXPECT_GE(per[o], n / 3);
        EXPECT_LE(per[o], (n + 2) / 3);
      }
      EXPECT_EQ(std::adjacent_find(chosen.begin(), chosen.end()), chosen.end());
    }
}

TEST(TuneSetting, RowCountAndOrdering) {
  const GridSpec grid = custom_grid({0.003, 0.03}, 0.01);
  const TuneResult r = tune_setting(small_config(), grid, RegularizerKind::tikhonov1);
  ASSERT_EQ(r.rows.size(), grid.size() * 2);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(r.rows[i].repeat, static_cast<int>(i / grid.size()));
    EXPECT_EQ(r.rows[i].alpha, grid.values[i % grid.size()]);
    EXPECT_EQ(r.rows[i].config_id, "1.5T-3s");
    EXPECT_TRUE(std::isfinite(r.rows[i].psnr_db));
    EXPECT_GT(r.rows[i].ssim, 0.0);
    EXPECT_LE(r.rows[i].ssim, 1.0);
  }
  EXPECT_EQ(r.alpha_star_psnr, select_alpha(r, Metric::psnr));
  EXPECT_EQ(r.alpha_star_ssim, select_alpha(r, Metric::ssim));
  EXPECT_EQ(r.default_alpha, 0.01);
  EXPECT_GE(metric_gain(r, Metric::psnr), 0.0);
}

TEST(TuneSetting, SingleValueGrid) {
  const GridSpec grid = custom_grid({}, 0.05);
  for (auto reg : {RegularizerKind::tikhonov1, RegularizerKind::tv}) {
    Configuration c = small_config(2);
    c.repeats = 1;
    TuneOptions opts;
    if (reg == RegularizerKind::tv) {
      opts.solver = SolverConfig::defaults(reg);
      opts.solver->max_iters = 20;
    }
    const TuneResult r = tune_setting(c, grid, reg, opts);
    EXPECT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.alpha_star_psnr, 0.05);
    EXPECT_EQ(r.alpha_star_ssim, 0.05);
  }
}

TEST(TuneSetting, DeterministicAndIndependentOfWorkers) {
  const GridSpec grid = custom_grid({0.003, 0.1}, 0.01);
  const TuneResult a = tune_setting(small_config(5), grid, RegularizerKind::tikhonov1);
  const TuneResult b = tune_setting(small_config(5), grid, RegularizerKind::tikhonov1);
  TuneOptions par;
  par.workers = 3;
  const TuneResult c = tune_setting(small_config(5), grid, RegularizerKind::tikhonov1, par);
  expect_same_rows(a.rows, b.rows);
  expect_same_rows(a.rows, c.rows);
  const TuneResult d = tune_setting(small_config(6), grid, RegularizerKind::tikhonov1);
  EXPECT_NE(a.rows[0].psnr_db, d.rows[0].psnr_db);
}

TEST(TuneSetting, InvalidConfigurationRejected) {
  Configuration c = small_config();
  c.n_series = 10;
  EXPECT_THROW(tune_setting(c, make_grid(GridKind::tikhonov_style), RegularizerKind::tikhonov1), InputError);
  c = small_config();
  c.ga_weeks = 40;
  EXPECT_THROW(tune_setting(c, make_grid(GridKind::tikhonov_style), RegularizerKind::tikhonov1), DomainError);
}

TEST(ExamDescriptor, ParsesStringsAndObjects) {
  const auto j = nlohmann::json::parse(R"({"exam_id": "e1", "ga_weeks": 27, "field_strength": 3.0,
    "motion_amplitude": "moderate", "series": ["axial", {"orientation": "coronal", "slices": 12}],
    "seed": 4, "repeats": 2, "grid_size": 40})");
  const ExamDescriptor d = parse_exam_descriptor(j);
  EXPECT_EQ(d.exam_id, "e1");
  EXPECT_EQ(d.motion, MotionAmplitude::moderate);
  ASSERT_EQ(d.series.size(), 2u);
  EXPECT_EQ(d.series[1].orientation, Orientation::coronal);
  EXPECT_EQ(d.series[1].slices, 12);
  const ExamDescriptor back = parse_exam_descriptor(to_json(d));
  EXPECT_EQ(to_json(back), to_json(d));
}

TEST(ExamDescriptor, RejectsInvalidDescriptors) {
  using nlohmann::json;
  EXPECT_THROW(parse_exam_descriptor(json::parse(R"({"ga_weeks": 30, "field_strength": 1.5})")), DescriptorError);
  EXPECT_THROW(parse_exam_descriptor(json::parse(R"({"ga_weeks": 30, "field_strength": 1.5, "series": [], "x": 1})")),
               DescriptorError);
  EXPECT_THROW(parse_exam_descriptor(json::parse(R"({"ga_weeks": 30, "field_strength": 2.0, "series": ["axial"]})")),
               DescriptorError);
  EXPECT_THROW(parse_exam_descriptor(json::parse(R"({"ga_weeks": 30, "field_strength": 1.5, "series": []})")),
               DescriptorError);
  EXPECT_THROW(parse_exam_descriptor(json::parse(R"({"ga_weeks": "old", "field_strength": 1.5, "series": ["axial"]})")),
               DescriptorError);
}

TEST(TuneSubject, FourAndNineSeriesCompleteTheGrid) {
  const GridSpec grid = custom_grid({0.05}, 0.01);
  for (int count : {4, 9}) {
    ExamDescriptor d = descriptor_from_configuration(small_config(3, count), "exam-" + std::to_string(count));
    d.repeats = 1;
    const TuneResult r = tune_subject(d, grid, RegularizerKind::tikhonov1);
    EXPECT_EQ(r.rows.size(), grid.size());
    EXPECT_EQ(r.config.n_series, count);
    EXPECT_EQ(r.config_id, "exam-" + std::to_string(count));
  }
}

TEST(TuneSubject, DeterministicPerSeed) {
  const GridSpec grid = custom_grid({0.05}, 0.01);
  ExamDescriptor d = descriptor_from_configuration(small_config(3, 3));
  const TuneResult a = tune_subject(d, grid, RegularizerKind::tikhonov1);
  const TuneResult b = tune_subject(d, grid, RegularizerKind::tikhonov1);
  expect_same_rows(a.rows, b.rows);
}

TEST(TuneSubject, SubjectOptimumWithinSettingRange) {
  // The subject-wise optimum of a descriptor that mimics a configuration
  // lies within the range of setting-wise optima over several phantoms.
  const GridSpec grid = make_grid(GridKind::tikhonov_style);
  double lo = 1e300, hi = -1e300;
  for (std::uint64_t s = 10; s < 14; ++s) {
    Configuration c = small_config(s);
    c.repeats = 1;
    const TuneResult r = tune_setting(c, grid, RegularizerKind::tikhonov1);
    lo = std::min(lo, r.alpha_star_psnr);
    hi = std::max(hi, r.alpha_star_psnr);
  }
  ExamDescriptor d = descriptor_from_configuration(small_config(10));
  d.repeats = 1;
  const TuneResult sub = tune_subject(d, grid, RegularizerKind::tikhonov1);
  EXPECT_GE(sub.alpha_star_psnr, lo);
  EXPECT_LE(sub.alpha_star_psnr, hi);
}

TEST(GaSweep, SingleAgeGivesSingleRow) {
  Configuration c = small_config(4);
  c.repeats = 1;
  const GaSweepResult r = ga_sweep({26.0}, c, custom_grid({0.05}, 0.01), RegularizerKind::tikhonov1);
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_EQ(r.table[0].ga_weeks, 26.0);
  EXPECT_EQ(r.table[0].alpha_star_psnr, r.runs[0].alpha_star_psnr);
  EXPECT_EQ(r.runs[0].rows[0].ga_weeks, 26.0);
  EXPECT_THROW(ga_sweep({}, c, custom_grid({0.05}, 0.01), RegularizerKind::tikhonov1), InputError);
}
