#ifndef SRTUNE_PHANTOM_HPP
#define SRTUNE_PHANTOM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "srtune/errors.hpp"
#include "srtune/geometry.hpp"
#include "srtune/rng.hpp"

#ifndef SRTUNE_DEFAULT_TISSUE_TABLE
#define SRTUNE_DEFAULT_TISSUE_TABLE "data/tissues.json"
#endif

namespace srtune {

namespace label {
inline constexpr std::uint8_t background = 0;
inline constexpr std::uint8_t csf = 1;
inline constexpr std::uint8_t cortical_gm = 2;
inline constexpr std::uint8_t white_matter = 3;
inline constexpr std::uint8_t deep_gm = 4;
inline constexpr std::uint8_t ventricles = 5;
inline constexpr int count = 6;
} // namespace label

struct LabelVolume {
  Geometry geom;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
};

struct TissueProperties {
  int label = 0;
  std::string name;
  double t1_ms = 0;
  double t2_ms = 0;
  double pd = 0;

  void validate() const {
    if (!(t2_ms > 0.0) || !(t1_ms > t2_ms))
      throw TableError("tissue '" + name + "': need T1 > T2 > 0");
    if (!(pd > 0.0) || pd > 1.0)
      throw TableError("tissue '" + name + "': PD must lie in (0, 1]");
  }
};

class TissueTable {
public:
  TissueTable() = default;

  explicit TissueTable(std::vector<TissueProperties> entries) {
    for (auto& e : entries)
      add(std::move(e));
  }

  void add(TissueProperties t) {
    t.validate();
    if (t.label < 0 || t.label > 255)
      throw TableError("tissue label out of range: " + std::to_string(t.label));
    entries_[t.label] = std::move(t);
  }

  const TissueProperties* find(int lbl) const {
    auto it = entries_.find(lbl);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<int, TissueProperties>& entries() const { return entries_; }

private:
  std::map<int, TissueProperties> entries_;
};

inline std::string field_key(double tesla) {
  if (std::abs(tesla - 1.5) < 1e-9)
    return "1.5";
  if (std::abs(tesla - 3.0) < 1e-9)
    return "3.0";
  throw DomainError("field strength must be 1.5 or 3.0 T");
}

/// Parse {"1.5": [{label, name, T1_ms, T2_ms, PD}, ...], "3.0": [...]}.
inline TissueTable parse_tissue_table(const nlohmann::json& doc, double tesla) {
  const std::string key = field_key(tesla);
  if (!doc.is_object() || !doc.contains(key) || !doc.at(key).is_array())
    throw TableError("tissue table has no entry array for " + key + " T");
  TissueTable table;
  try {
    for (const auto& e : doc.at(key)) {
      TissueProperties t;
      t.label = e.at("label").get<int>();
      t.name = e.value("name", std::string("label") + std::to_string(t.label));
      t.t1_ms = e.at("T1_ms").get<double>();
      t.t2_ms = e.at("T2_ms").get<double>();
      t.pd = e.at("PD").get<double>();
      table.add(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw TableError(std::string("tissue table: ") + ex.what());
  }
  return table;
}

inline TissueTable load_tissue_table(const std::string& path, double tesla) {
  std::ifstream in(path);
  if (!in)
    throw TableError("cannot open tissue table " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw TableError("tissue table " + path + ": " + ex.what());
  }
  return parse_tissue_table(doc, tesla);
}

inline TissueTable default_tissue_table(double tesla) {
  return load_tissue_table(SRTUNE_DEFAULT_TISSUE_TABLE, tesla);
}

/// Fast spin echo acquisition parameters for one field strength.
struct SequenceParams {
  double field_strength = 1.5; // T
  double tr_ms = 1200;
  double te_ms = 90;
  double in_plane = 1.1;        // mm
  double slice_thickness = 3.0; // mm
  double slice_spacing = 3.0;   // mm
  double noise_sd = 0.15;
  double fov_shift = 1.6; // mm, per series index along the slice axis

  void validate() const {
    field_key(field_strength);
    if (!(tr_ms > 0) || !(te_ms >= 0) || !(in_plane > 0) || !(slice_thickness > 0) ||
        !(slice_spacing > 0) || !(noise_sd >= 0) || !(fov_shift >= 0))
      throw DomainError("sequence parameters must be positive");
  }

  // 3.0 mm thickness is used at both fields. A 3.3 mm through-plane figure
  // also circulates for this protocol; set slice_spacing to 3.3 to emulate it.
  static SequenceParams at_field(double tesla) {
    SequenceParams p;
    if (field_key(tesla) == "1.5")
      return p;
    p.field_strength = 3.0;
    p.tr_ms = 1100;
    p.te_ms = 101;
    p.in_plane = 0.5;
    p.noise_sd = 0.0025;
    return p;
  }
};

/// Saturation recovery with T2 decay: PD·exp(−TE/T2)·(1 − exp(−TR/T1)).
inline double t2w_signal(const TissueProperties& t, double tr_ms, double te_ms) {
  return t.pd * std::exp(-te_ms / t.t2_ms) * (1.0 - std::exp(-tr_ms / t.t1_ms));
}

namespace detail {

inline constexpr double phantom_ga_min = 21.0;
inline constexpr double phantom_ga_max = 38.0;

struct Ellipsoid {
  Vec3 center;
  Vec3 semi;

  bool contains(const Vec3& q) const {
    double s = 0;
    for (int a = 0; a < 3; ++a) {
      const double d = (q[a] - center[a]) / semi[a];
      s += d * d;
    }
    return s <= 1.0;
  }
};

struct FoldTerm {
  double weight;
  int polar;
  int azimuth;
  double phase_polar;
  double phase_azimuth;
};

// Normalised-radius landmarks, relative to the outer CSF ellipsoid.
inline constexpr double brain_surface = 0.84;
inline constexpr double cortex_band = 0.14;

} // namespace detail

/// Procedural brain-like label phantom centred in `grid`. The outer extent is
/// a GA-dependent fraction of the field of view, and the folding amplitude of
/// the cortical ribbon grows with GA.
inline LabelVolume generate_phantom(double ga_weeks, const Geometry& grid, std::uint64_t seed) {
  using namespace detail;
  grid.validate();
  if (!(ga_weeks >= phantom_ga_min && ga_weeks <= phantom_ga_max))
    throw DomainError("phantom: gestational age must lie in [21, 38] weeks");
  if (!grid.isotropic(1e-6))
    throw GeometryError("phantom: grid must be isotropic");
  const double voxel = grid.spacing[0];
  if (voxel > 1.1 + 1e-9)
    throw ResolutionError("phantom: voxel size must be <= 1.1 mm");

  Rng rng(derive_seed(seed, "phantom"));
  const double t = (ga_weeks - phantom_ga_min) / (phantom_ga_max - phantom_ga_min);
  const double size_fraction = 0.55 + 0.25 * t;
  const double fold_amplitude = 0.015 + 0.065 * t;

  const Vec3 ext = grid.extent();
  const double half_fov = 0.5 * std::min({ext[0], ext[1], ext[2]});
  const Vec3 shape{0.82, 1.0, 0.86};
  Vec3 semi{};
  for (int a = 0; a < 3; ++a)
    semi[a] = half_fov * size_fraction * shape[a] * (1.0 + 0.04 * rng.uniform(-1, 1));
  const Vec3 grid_center =
      grid.world(Vec3{0.5 * (grid.dims[0] - 1), 0.5 * (grid.dims[1] - 1), 0.5 * (grid.dims[2] - 1)});
  Vec3 center = grid_center;
  for (int a = 0; a < 3; ++a)
    center[a] += 0.02 * half_fov * rng.uniform(-1, 1);

  std::vector<FoldTerm> folds(6);
  double weight_sum = 0;
  for (auto& f : folds) {
    f.weight = rng.uniform(0.5, 1.0);
    f.polar = 3 + static_cast<int>(rng.below(7));
    f.azimuth = 3 + static_cast<int>(rng.below(7));
    f.phase_polar = rng.uniform(0, 2 * std::numbers::pi);
    f.phase_azimuth = rng.uniform(0, 2 * std::numbers::pi);
    weight_sum += f.weight;
  }

  auto jitter = [&](double v, double rel) { return v * (1.0 + rel * rng.uniform(-1, 1)); };
  const Ellipsoid deep_left{{-jitter(0.20, 0.05), -0.02, -0.08}, {jitter(0.14, 0.05), jitter(0.20, 0.05), jitter(0.15, 0.05)}};
  const Ellipsoid deep_right{{jitter(0.20, 0.05), -0.02, -0.08}, {jitter(0.14, 0.05), jitter(0.20, 0.05), jitter(0.15, 0.05)}};
  const Ellipsoid vent_left{{-jitter(0.10, 0.05), 0.06, 0.10}, {jitter(0.085, 0.05), jitter(0.32, 0.05), jitter(0.10, 0.05)}};
  const Ellipsoid vent_right{{jitter(0.10, 0.05), 0.06, 0.10}, {jitter(0.085, 0.05), jitter(0.32, 0.05), jitter(0.10, 0.05)}};

  const double min_semi = std::min({semi[0], semi[1], semi[2]});
  const double cortex_mm = cortex_band * min_semi;
  const double csf_gap_mm = (1.0 - brain_surface * (1.0 + fold_amplitude)) * min_semi;
  const double ventricle_mm =
      2.0 * std::min(vent_left.semi[0], vent_right.semi[0]) * min_semi;
  const double thinnest = std::min({cortex_mm, csf_gap_mm, ventricle_mm});
  if (thinnest < 1.25 * voxel)
    throw ResolutionError("phantom: grid too coarse, thinnest structure spans " +
                          std::to_string(thinnest / voxel) + " voxels");
  for (int a = 0; a < 3; ++a)
    if (0.5 * ext[a] < 1.05 * semi[a] + std::abs(center[a] - grid_center[a]))
      throw ResolutionError("phantom: field of view too small");

  LabelVolume out{grid, std::vector<std::uint8_t>(grid.size(), label::background)};
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 p = grid.world(i, j, k) - center;
        const Vec3 q{p[0] / semi[0], p[1] / semi[1], p[2] / semi[2]};
        const double rho = norm(q);
        if (rho > 1.0)
          continue;
        std::uint8_t lbl = label::csf;
        double fold = 0;
        if (rho > 1e-12) {
          const double polar = std::acos(std::clamp(q[2] / rho, -1.0, 1.0));
          const double azimuth = std::atan2(q[1], q[0]);
          for (const auto& f : folds)
            fold += f.weight * std::sin(f.polar * polar + f.phase_polar) *
                    std::cos(f.azimuth * azimuth + f.phase_azimuth);
          fold /= weight_sum;
        }
        const double scale = 1.0 + fold_amplitude * fold;
        if (rho <= brain_surface * scale)
          lbl = label::cortical_gm;
        if (rho <= (brain_surface - cortex_band) * scale)
          lbl = label::white_matter;
        if (deep_left.contains(q) || deep_right.contains(q))
          lbl = label::deep_gm;
        if (vent_left.contains(q) || vent_right.contains(q))
          lbl = label::ventricles;
        out.data[grid.index(i, j, k)] = lbl;
      }
  return out;
}

/// Per-voxel T2-weighted intensity; background stays exactly 0.
inline Volume3D render_signal(const LabelVolume& labels, const TissueTable& tissues, const SequenceParams& seq) {
  seq.validate();
  std::array<double, 256> lut{};
  std::array<bool, 256> known{};
  known[label::background] = true;
  for (const auto& [lbl, t] : tissues.entries()) {
    if (lbl == label::background)
      continue;
    lut[lbl] = std::clamp(t2w_signal(t, seq.tr_ms, seq.te_ms), 0.0, 1.0);
    known[lbl] = true;
  }
  Volume3D out(labels.geom);
  for (std::size_t n = 0; n < labels.data.size(); ++n) {
    const auto lbl = labels.data[n];
    if (!known[lbl])
      throw TableError("no tissue properties for label " + std::to_string(lbl));
    out.data[n] = lut[lbl];
  }
  return out;
}

/// Motion-free, noise-free reference on `reference_grid` (defaults to the label grid).
inline Volume3D reference_hr(const LabelVolume& labels, const TissueTable& tissues, const SequenceParams& seq,
                             const Geometry* reference_grid = nullptr) {
  Volume3D rendered = render_signal(labels, tissues, seq);
  if (reference_grid == nullptr || same_grid(*reference_grid, labels.geom, 0.0))
    return rendered;
  if (!reference_grid->isotropic(1e-6))
    throw GeometryError("reference_hr: reference grid must be isotropic");
  return resample(rendered, RigidTransform{}, *reference_grid);
}

/// Scales `v` in place so that its maximum is 1 and returns the factor used.
/// Noise levels are specified for unit-range images.
inline double normalize_unit_range(Volume3D& v) {
  double mx = 0.0;
  for (double s : v.data)
    mx = std::max(mx, s);
  if (!(mx > 0.0))
    throw DegenerateInputError("normalize_unit_range: volume has no positive intensity");
  const double scale = 1.0 / mx;
  for (double& s : v.data)
    s *= scale;
  return scale;
}

} // namespace srtune

#endif // SRTUNE_PHANTOM_HPP
