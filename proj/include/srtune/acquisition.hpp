#ifndef SRTUNE_ACQUISITION_HPP
#define SRTUNE_ACQUISITION_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>

#include <fftw3.h>

#include "srtune/errors.hpp"
#include "srtune/forward_model.hpp"
#include "srtune/geometry.hpp"
#include "srtune/phantom.hpp"
#include "srtune/rng.hpp"
#include "srtune/series.hpp"

namespace srtune {

namespace detail {

// FFTW planning is not thread-safe; execution with new-array calls is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  explicit FftwPlan(fftw_plan p) : plan(p) {}
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

inline Vec3 grid_center(const Geometry& g) {
  return g.world(Vec3{0.5 * (g.dims[0] - 1), 0.5 * (g.dims[1] - 1), 0.5 * (g.dims[2] - 1)});
}

} // namespace detail

/// Adds complex white Gaussian noise in k-space and returns the magnitude
/// image. Scaling: the unnormalised forward DFT is followed by a 1/N inverse,
/// so k-space components with sd·√N give image-domain real and imaginary
/// noise of standard deviation `sd` each.
inline Slice2D add_kspace_noise(const Slice2D& slice, double sd, std::uint64_t seed) {
  if (!(sd >= 0.0))
    throw DomainError("add_kspace_noise: sd must be non-negative");
  Slice2D out(slice.nu, slice.nv);
  if (sd == 0.0) {
    for (std::size_t n = 0; n < slice.data.size(); ++n)
      out.data[n] = std::abs(slice.data[n]);
    return out;
  }
  const std::size_t count = slice.data.size();
  std::unique_ptr<fftw_complex[], detail::FftwFree> buf(fftw_alloc_complex(count));
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd = fftw_plan_dft_2d(slice.nv, slice.nu, buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    inv = fftw_plan_dft_2d(slice.nv, slice.nu, buf.get(), buf.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  const detail::FftwPlan fwd_guard(fwd), inv_guard(inv);
  for (std::size_t n = 0; n < count; ++n) {
    buf[n][0] = slice.data[n];
    buf[n][1] = 0.0;
  }
  fftw_execute(fwd);
  Rng rng(seed);
  const double k_sd = sd * std::sqrt(static_cast<double>(count));
  for (std::size_t n = 0; n < count; ++n) {
    buf[n][0] += k_sd * rng.normal();
    buf[n][1] += k_sd * rng.normal();
  }
  fftw_execute(inv);
  const double scale = 1.0 / static_cast<double>(count);
  for (std::size_t n = 0; n < count; ++n)
    out.data[n] = std::hypot(buf[n][0] * scale, buf[n][1] * scale);
  return out;
}

/// Stack geometry for one series: in-plane grid at seq.in_plane covering the
/// HR field of view, slices every seq.slice_spacing, the whole stack shifted
/// by series_index·fov_shift along the slice normal.
inline Geometry stack_geometry(const Geometry& hr, Orientation orientation, const SequenceParams& seq, int series_index,
                               std::optional<int> n_slices = std::nullopt) {
  hr.validate();
  seq.validate();
  if (!hr.isotropic(1e-6))
    throw GeometryError("stack geometry: HR grid must be isotropic");
  if (hr.spacing[0] > seq.in_plane + 1e-9)
    throw GeometryError("stack geometry: HR voxel is coarser than the in-plane resolution");
  if (series_index < 0)
    throw InputError("stack geometry: negative series index");
  const Mat3 local = orientation_frame(orientation);
  const Mat3 frame = hr.axes * local;
  // Extent of the HR grid along each slice-frame axis.
  const Vec3 ext = hr.extent();
  Vec3 along{};
  for (int a = 0; a < 3; ++a) {
    const Vec3 col = column(local, a);
    along[a] = std::abs(col[0]) * ext[0] + std::abs(col[1]) * ext[1] + std::abs(col[2]) * ext[2];
  }
  Geometry g;
  g.axes = frame;
  g.spacing = {seq.in_plane, seq.in_plane, seq.slice_spacing};
  g.dims[0] = std::max(1, static_cast<int>(std::lround(along[0] / seq.in_plane)));
  g.dims[1] = std::max(1, static_cast<int>(std::lround(along[1] / seq.in_plane)));
  const int fit = static_cast<int>(std::floor(along[2] / seq.slice_spacing + 1e-9));
  g.dims[2] = n_slices.value_or(fit);
  if (g.dims[2] < 1 || g.dims[2] * seq.slice_spacing > along[2] + 1e-6)
    throw GeometryError("stack geometry: slice stack is longer than the HR extent along " +
                        std::string(to_string(orientation)));
  const Vec3 center = detail::grid_center(hr) + (series_index * seq.fov_shift) * column(frame, 2);
  g.origin = center - frame * Vec3{0.5 * (g.dims[0] - 1) * g.spacing[0], 0.5 * (g.dims[1] - 1) * g.spacing[1],
                                   0.5 * (g.dims[2] - 1) * g.spacing[2]};
  return g;
}

struct SimulationOptions {
  std::optional<PSFSpec> psf;  // default: Gaussian from the sequence
  std::optional<int> n_slices; // default: as many as fit
  bool add_noise = true;
};

/// Simulate one LR series: per-slice motion, PSF blur, in-plane sampling,
/// k-space noise. Motion and noise streams derive from (seed, orientation,
/// series_index) so series can be simulated in any order.
inline LRSeries simulate_lr_series(const Volume3D& hr, Orientation orientation, const SequenceParams& seq,
                                   const MotionConfig& motion_cfg, int series_index, std::uint64_t seed,
                                   const SimulationOptions& opts = {}) {
  hr.geom.validate();
  motion_cfg.validate();
  LRSeries out;
  out.orientation = orientation;
  out.series_index = series_index;
  out.grid = stack_geometry(hr.geom, orientation, seq, series_index, opts.n_slices);
  out.slice_thickness = seq.slice_thickness;
  out.motion_center = detail::grid_center(hr.geom);

  const auto stream = static_cast<std::uint64_t>(orientation) * 64 + static_cast<std::uint64_t>(series_index);
  MotionConfig cfg = motion_cfg;
  cfg.seed = derive_seed(motion_cfg.seed, "series-motion", stream);
  MotionSample motion = sample_motion(cfg, out.grid.dims[2]);
  out.motion = std::move(motion.transforms);
  out.corrupted = std::move(motion.corrupted);

  const PSFSpec psf = opts.psf.value_or(PSFSpec::for_acquisition(seq.in_plane, seq.slice_thickness));
  psf.validate();
  const int nu = out.grid.dims[0], nv = out.grid.dims[1];
  for (int k = 0; k < out.grid.dims[2]; ++k) {
    const Rigid m = detail::motion_about(out.motion[static_cast<std::size_t>(k)], out.motion_center);
    const SparseRows rows = build_slice_rows(hr.geom, out.grid, k, m, psf);
    Slice2D clean(nu, nv);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      double acc = 0.0;
      for (std::int64_t n = rows.row_ptr[r]; n < rows.row_ptr[r + 1]; ++n)
        acc += static_cast<double>(rows.vals[static_cast<std::size_t>(n)]) *
               hr.data[static_cast<std::size_t>(rows.cols[static_cast<std::size_t>(n)])];
      clean.data[r] = acc;
    }
    if (opts.add_noise)
      out.slices.push_back(add_kspace_noise(clean, seq.noise_sd, derive_seed(seed, "kspace-noise", stream,
                                                                              static_cast<std::uint64_t>(k))));
    else
      out.slices.push_back(std::move(clean));
  }
  return out;
}

} // namespace srtune

#endif // SRTUNE_ACQUISITION_HPP
