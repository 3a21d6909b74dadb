#ifndef SRTUNE_SERIES_HPP
#define SRTUNE_SERIES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "srtune/errors.hpp"
#include "srtune/geometry.hpp"
#include "srtune/rng.hpp"

namespace srtune {

enum class Orientation { axial, coronal, sagittal };

inline const char* to_string(Orientation o) {
  switch (o) {
  case Orientation::axial:
    return "axial";
  case Orientation::coronal:
    return "coronal";
  case Orientation::sagittal:
    return "sagittal";
  }
  return "?";
}

inline Orientation parse_orientation(const std::string& s) {
  if (s == "axial")
    return Orientation::axial;
  if (s == "coronal")
    return Orientation::coronal;
  if (s == "sagittal")
    return Orientation::sagittal;
  throw DescriptorError("unknown orientation '" + s + "'");
}

/// Columns are the in-plane axes u, v and the slice normal n, expressed in
/// the reference (HR) frame. All three frames are right-handed.
inline Mat3 orientation_frame(Orientation o) {
  switch (o) {
  case Orientation::axial:
    return identity3();
  case Orientation::coronal: // u = x, v = z, n = -y
    return {{{1, 0, 0}, {0, 0, -1}, {0, 1, 0}}};
  case Orientation::sagittal: // u = y, v = z, n = x
    return {{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}};
  }
  return identity3();
}

struct Slice2D {
  int nu = 0;
  int nv = 0;
  std::vector<double> data; // u fastest

  Slice2D() = default;
  Slice2D(int u, int v, double fill = 0.0) : nu(u), nv(v), data(static_cast<std::size_t>(u) * v, fill) {}

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) + static_cast<std::size_t>(nu) * j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) + static_cast<std::size_t>(nu) * j]; }
};

enum class MotionAmplitude { little, moderate };

inline const char* to_string(MotionAmplitude a) { return a == MotionAmplitude::little ? "little" : "moderate"; }

inline MotionAmplitude parse_motion_amplitude(const std::string& s) {
  if (s == "little")
    return MotionAmplitude::little;
  if (s == "moderate")
    return MotionAmplitude::moderate;
  throw DescriptorError("unknown motion amplitude '" + s + "'");
}

struct MotionConfig {
  double corrupted_fraction = 0.05;
  double translation_range = 1.0; // mm, uniform in [-r, r] per axis
  double rotation_range = 2.0;    // degrees, uniform in [-r, r] per axis
  MotionAmplitude amplitude = MotionAmplitude::little;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(corrupted_fraction >= 0.0 && corrupted_fraction <= 1.0))
      throw DomainError("motion: corrupted fraction must lie in [0, 1]");
    if (!(translation_range >= 0.0) || !(rotation_range >= 0.0))
      throw DomainError("motion: ranges must be non-negative");
  }

  static MotionConfig preset(MotionAmplitude a, std::uint64_t seed = 0) {
    MotionConfig c;
    c.amplitude = a;
    c.seed = seed;
    if (a == MotionAmplitude::moderate) {
      c.corrupted_fraction = 0.10;
      c.translation_range = 2.5;
      c.rotation_range = 5.0;
    }
    return c;
  }

  static MotionConfig none() {
    MotionConfig c;
    c.corrupted_fraction = 0.0;
    c.translation_range = 0.0;
    c.rotation_range = 0.0;
    return c;
  }
};

struct MotionSample {
  std::vector<RigidTransform> transforms;
  std::vector<bool> corrupted;
};

/// Each slice is independently corrupted with probability corrupted_fraction
/// and then receives uniform translations and rotations within the ranges.
inline MotionSample sample_motion(const MotionConfig& cfg, int n_slices) {
  cfg.validate();
  if (n_slices < 1)
    throw InputError("sample_motion: need at least one slice");
  Rng rng(derive_seed(cfg.seed, "motion"));
  MotionSample out;
  out.transforms.resize(static_cast<std::size_t>(n_slices));
  out.corrupted.resize(static_cast<std::size_t>(n_slices));
  for (int s = 0; s < n_slices; ++s) {
    const bool hit = rng.uniform() < cfg.corrupted_fraction;
    RigidTransform t;
    if (hit) {
      for (int a = 0; a < 3; ++a)
        t.translation_mm[a] = rng.uniform(-cfg.translation_range, cfg.translation_range);
      for (int a = 0; a < 3; ++a)
        t.rotation_deg[a] = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
    }
    out.corrupted[static_cast<std::size_t>(s)] = hit && !t.is_identity();
    out.transforms[static_cast<std::size_t>(s)] = t;
  }
  return out;
}

/// One low-resolution stack. `grid` places pixel (i, j) of slice k at
/// grid.world(i, j, k); its axes are the orientation frame and its third
/// spacing is the slice spacing.
struct LRSeries {
  Orientation orientation = Orientation::axial;
  int series_index = 0;
  Geometry grid;
  double slice_thickness = 3.0;
  Vec3 motion_center{0, 0, 0}; // rotations act about this world point
  std::vector<Slice2D> slices;
  std::vector<RigidTransform> motion;
  std::vector<bool> corrupted;

  int slice_count() const { return static_cast<int>(slices.size()); }

  std::size_t pixel_count() const {
    std::size_t n = 0;
    for (const auto& s : slices)
      n += s.data.size();
    return n;
  }

  void validate() const {
    grid.validate();
    if (slices.empty())
      throw InputError("series: no slices");
    if (motion.size() != slices.size() || corrupted.size() != slices.size())
      throw InputError("series: motion list length differs from slice count");
    if (static_cast<int>(slices.size()) != grid.dims[2])
      throw InputError("series: slice count differs from stack geometry");
    for (std::size_t s = 0; s < slices.size(); ++s) {
      if (slices[s].nu != grid.dims[0] || slices[s].nv != grid.dims[1] ||
          slices[s].data.size() != static_cast<std::size_t>(grid.dims[0]) * grid.dims[1])
        throw ShapeError("series: slice size differs from stack geometry");
      if (corrupted[s] == motion[s].is_identity())
        throw InputError("series: corruption flags disagree with motion");
    }
  }

  /// Slices concatenated in order.
  std::vector<double> stacked() const {
    std::vector<double> out;
    out.reserve(pixel_count());
    for (const auto& s : slices)
      out.insert(out.end(), s.data.begin(), s.data.end());
    return out;
  }
};

} // namespace srtune

#endif // SRTUNE_SERIES_HPP
