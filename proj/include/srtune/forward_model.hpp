#ifndef SRTUNE_FORWARD_MODEL_HPP
#define SRTUNE_FORWARD_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "srtune/errors.hpp"
#include "srtune/geometry.hpp"
#include "srtune/parallel.hpp"
#include "srtune/rng.hpp"
#include "srtune/series.hpp"

namespace srtune {

enum class PSFKind {
  gaussian, ///< separable Gaussian in the slice frame
  delta     ///< ideal sampling: linear interpolation of the HR grid
};

struct PSFSpec {
  PSFKind kind = PSFKind::gaussian;
  Vec3 fwhm{1.1, 1.1, 3.0}; // mm along u, v, n
  double truncation = 3.0;  // in standard deviations

  void validate() const {
    if (kind == PSFKind::delta)
      return;
    for (double f : fwhm)
      if (!(f > 0.0))
        throw DomainError("psf: fwhm must be positive");
    if (!(truncation >= 2.0))
      throw DomainError("psf: truncation must be at least 2 sigma");
  }

  /// FWHM = in-plane voxel size in-plane and slice thickness through-plane.
  static PSFSpec for_acquisition(double in_plane, double slice_thickness) {
    return {PSFKind::gaussian, {in_plane, in_plane, slice_thickness}, 3.0};
  }

  static PSFSpec delta() { return {PSFKind::delta, {0, 0, 0}, 3.0}; }
};

/// Compressed sparse rows; float weights, double accumulation.
struct SparseRows {
  std::vector<std::int64_t> row_ptr{0};
  std::vector<std::int32_t> cols;
  std::vector<float> vals;

  std::size_t rows() const { return row_ptr.size() - 1; }
  std::size_t nnz() const { return cols.size(); }

  void append(const SparseRows& other) {
    const std::int64_t base = row_ptr.back();
    for (std::size_t r = 1; r < other.row_ptr.size(); ++r)
      row_ptr.push_back(base + other.row_ptr[r]);
    cols.insert(cols.end(), other.cols.begin(), other.cols.end());
    vals.insert(vals.end(), other.vals.begin(), other.vals.end());
  }
};

namespace detail {

inline constexpr double fwhm_to_sigma = 0.42466090014400953; // 1 / (2 sqrt(2 ln 2))

/// Builds the PSF weights of one slice pixel against the HR grid.
class PixelKernel {
public:
  PixelKernel(const Geometry& hr, const PSFSpec& psf) : hr_(hr), psf_(psf) {
    const double h = std::min({hr.spacing[0], hr.spacing[1], hr.spacing[2]});
    for (int a = 0; a < 3; ++a) {
      if (psf.kind == PSFKind::delta) {
        half_width_[a] = h;
        inv_two_var_[a] = 0.0;
      } else {
        const double sigma = psf.fwhm[a] * fwhm_to_sigma;
        half_width_[a] = psf.truncation * sigma;
        inv_two_var_[a] = 1.0 / (2.0 * sigma * sigma);
      }
    }
  }

  /// Appends one normalised row. `center` is the pixel centre in the scanner
  /// frame, `frame` the slice axes, `to_scanner` maps anatomy to scanner
  /// coordinates (inverse of the slice motion).
  void append_row(const Vec3& center, const Mat3& frame, const Rigid& motion, const Rigid& to_scanner,
                  SparseRows& out, std::vector<std::pair<std::int32_t, double>>& scratch) const {
    scratch.clear();
    // Bounding box of the support in continuous HR index space.
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 q{(corner & 1 ? 1 : -1) * half_width_[0], (corner & 2 ? 1 : -1) * half_width_[1],
                   (corner & 4 ? 1 : -1) * half_width_[2]};
      const Vec3 idx = hr_.continuous_index(motion(center + frame * q));
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], idx[a]);
        hi[a] = std::max(hi[a], idx[a]);
      }
    }
    int from[3], to[3];
    for (int a = 0; a < 3; ++a) {
      from[a] = static_cast<int>(std::ceil(lo[a] - 1e-9));
      to[a] = static_cast<int>(std::floor(hi[a] + 1e-9));
    }
    const Mat3 frame_t = transpose(frame);
    double total = 0.0;
    for (int k = from[2]; k <= to[2]; ++k)
      for (int j = from[1]; j <= to[1]; ++j)
        for (int i = from[0]; i <= to[0]; ++i) {
          const Vec3 q = frame_t * (to_scanner(hr_.world(i, j, k)) - center);
          double w = 1.0;
          for (int a = 0; a < 3 && w > 0.0; ++a)
            w *= weight(a, q[a]);
          if (w <= 0.0)
            continue;
          total += w;
          if (i >= 0 && j >= 0 && k >= 0 && i < hr_.dims[0] && j < hr_.dims[1] && k < hr_.dims[2])
            scratch.emplace_back(static_cast<std::int32_t>(hr_.index(i, j, k)), w);
        }
    if (total > 0.0)
      for (const auto& [col, w] : scratch) {
        out.cols.push_back(col);
        out.vals.push_back(static_cast<float>(w / total));
      }
    out.row_ptr.push_back(static_cast<std::int64_t>(out.cols.size()));
  }

private:
  double weight(int axis, double q) const {
    const double hw = half_width_[axis];
    double d = std::abs(q);
    if (d < 1e-9 * hw)
      d = 0.0;
    if (std::abs(d - hw) < 1e-9 * hw)
      d = hw;
    if (psf_.kind == PSFKind::delta)
      return d >= hw ? 0.0 : 1.0 - d / hw;
    return d > hw ? 0.0 : std::exp(-d * d * inv_two_var_[axis]);
  }

  const Geometry& hr_;
  const PSFSpec& psf_;
  double half_width_[3]{};
  double inv_two_var_[3]{};
};

/// Slice motion as an anatomy-space rigid map about `center`.
inline Rigid motion_about(const RigidTransform& t, const Vec3& center) {
  if (t.is_identity())
    return {};
  const Mat3 r = t.rotation_matrix();
  return {r, center - r * center + t.translation_mm};
}

} // namespace detail

/// Rows of one slice: pixel (i, j) of slice `slice` in `stack`, seen through `motion`.
inline SparseRows build_slice_rows(const Geometry& hr, const Geometry& stack, int slice, const Rigid& motion,
                                   const PSFSpec& psf) {
  const detail::PixelKernel kernel(hr, psf);
  const Rigid to_scanner = motion.inverse();
  SparseRows rows;
  rows.row_ptr.reserve(static_cast<std::size_t>(stack.dims[0]) * stack.dims[1] + 1);
  std::vector<std::pair<std::int32_t, double>> scratch;
  for (int j = 0; j < stack.dims[1]; ++j)
    for (int i = 0; i < stack.dims[0]; ++i)
      kernel.append_row(stack.world(i, j, slice), stack.axes, motion, to_scanner, rows, scratch);
  return rows;
}

struct SliceDescriptor {
  int series = 0;      // position in the input series list
  int slice = 0;       // slice index within that series
  Rigid motion;        // anatomy-space map used for this slice
  std::size_t row_offset = 0;
  std::size_t row_count = 0;
};

/// The linear acquisition model H: per-slice rigid motion, PSF blur and
/// sampling onto the slice grid. Stored as explicit sparse rows so that the
/// adjoint is the exact transpose.
class ForwardOperator {
public:
  ForwardOperator() = default;

  ForwardOperator(Geometry target, PSFSpec psf, std::vector<SliceDescriptor> descriptors, SparseRows rows)
      : target_(std::move(target)), psf_(psf), descriptors_(std::move(descriptors)), rows_(std::move(rows)) {}

  const Geometry& target() const { return target_; }
  const PSFSpec& psf() const { return psf_; }
  const std::vector<SliceDescriptor>& descriptors() const { return descriptors_; }
  const SparseRows& matrix() const { return rows_; }

  std::size_t rows() const { return rows_.rows(); }
  std::size_t cols() const { return target_.size(); }

  void apply_into(std::span<const double> x, std::span<double> y) const {
    if (x.size() != cols() || y.size() != rows())
      throw ShapeError("forward operator: apply size mismatch");
    const auto* rp = rows_.row_ptr.data();
    const auto* c = rows_.cols.data();
    const auto* v = rows_.vals.data();
    for (std::size_t r = 0; r < rows(); ++r) {
      double acc = 0.0;
      for (std::int64_t n = rp[r]; n < rp[r + 1]; ++n)
        acc += static_cast<double>(v[n]) * x[static_cast<std::size_t>(c[n])];
      y[r] = acc;
    }
  }

  void apply_adjoint_into(std::span<const double> y, std::span<double> x) const {
    if (y.size() != rows() || x.size() != cols())
      throw ShapeError("forward operator: adjoint size mismatch");
    std::fill(x.begin(), x.end(), 0.0);
    const auto* rp = rows_.row_ptr.data();
    const auto* c = rows_.cols.data();
    const auto* v = rows_.vals.data();
    for (std::size_t r = 0; r < rows(); ++r) {
      const double yr = y[r];
      if (yr == 0.0)
        continue;
      for (std::int64_t n = rp[r]; n < rp[r + 1]; ++n)
        x[static_cast<std::size_t>(c[n])] += static_cast<double>(v[n]) * yr;
    }
  }

  std::vector<double> apply(const Volume3D& x) const {
    if (!same_grid(x.geom, target_, 1e-6))
      throw ShapeError("forward operator: volume does not match the target grid");
    std::vector<double> y(rows());
    apply_into(x.data, y);
    return y;
  }

  Volume3D apply_adjoint(std::span<const double> y) const {
    if (y.size() != rows())
      throw ShapeError("forward operator: data length does not match descriptor count");
    Volume3D x(target_);
    apply_adjoint_into(y, x.data);
    return x;
  }

private:
  Geometry target_;
  PSFSpec psf_;
  std::vector<SliceDescriptor> descriptors_;
  SparseRows rows_;
};

/// One descriptor per slice of every series, in series order. With
/// `motion_error`, each slice transform is composed with a random
/// perturbation to emulate registration error.
inline ForwardOperator build_operator(const std::vector<const LRSeries*>& series, const Geometry& target,
                                      const PSFSpec& psf, const std::optional<MotionConfig>& motion_error = std::nullopt,
                                      int workers = 1) {
  if (series.empty())
    throw InputError("build_operator: empty series list");
  target.validate();
  psf.validate();
  std::vector<SliceDescriptor> descriptors;
  std::vector<const Geometry*> grids;
  for (std::size_t s = 0; s < series.size(); ++s) {
    series[s]->validate();
    for (int k = 0; k < series[s]->slice_count(); ++k) {
      SliceDescriptor d;
      d.series = static_cast<int>(s);
      d.slice = k;
      d.motion = detail::motion_about(series[s]->motion[static_cast<std::size_t>(k)], series[s]->motion_center);
      d.row_count = static_cast<std::size_t>(series[s]->grid.dims[0]) * series[s]->grid.dims[1];
      descriptors.push_back(d);
      grids.push_back(&series[s]->grid);
    }
  }
  if (motion_error) {
    const MotionSample perturb = sample_motion(*motion_error, static_cast<int>(descriptors.size()));
    for (std::size_t n = 0; n < descriptors.size(); ++n) {
      const RigidTransform& p = perturb.transforms[n];
      if (p.is_identity())
        continue;
      const Vec3 center = series[static_cast<std::size_t>(descriptors[n].series)]->motion_center;
      descriptors[n].motion = detail::motion_about(p, center).compose(descriptors[n].motion);
    }
  }
  std::size_t offset = 0;
  for (auto& d : descriptors) {
    d.row_offset = offset;
    offset += d.row_count;
  }
  std::vector<SparseRows> blocks(descriptors.size());
  parallel_for(descriptors.size(), workers, [&](std::size_t n) {
    blocks[n] = build_slice_rows(target, *grids[n], descriptors[n].slice, descriptors[n].motion, psf);
  });
  SparseRows rows;
  std::size_t nnz = 0;
  for (const auto& b : blocks)
    nnz += b.nnz();
  rows.row_ptr.reserve(offset + 1);
  rows.cols.reserve(nnz);
  rows.vals.reserve(nnz);
  for (auto& b : blocks) {
    rows.append(b);
    b = SparseRows{};
  }
  return ForwardOperator(target, psf, std::move(descriptors), std::move(rows));
}

inline ForwardOperator build_operator(const std::vector<LRSeries>& series, const Geometry& target, const PSFSpec& psf,
                                      const std::optional<MotionConfig>& motion_error = std::nullopt, int workers = 1) {
  std::vector<const LRSeries*> ptrs;
  for (const auto& s : series)
    ptrs.push_back(&s);
  return build_operator(ptrs, target, psf, motion_error, workers);
}

/// Largest singular value of `op` by power iteration on HᵀH.
template <class Op>
double estimate_operator_norm(const Op& op, int iterations = 50, std::uint64_t seed = 0) {
  Rng rng(derive_seed(seed, "power-iteration"));
  std::vector<double> x(op.cols()), y(op.rows()), z(op.cols());
  for (auto& v : x)
    v = rng.uniform(-1, 1);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double nx = std::sqrt(inner_product(std::span<const double>(x), std::span<const double>(x)));
    if (nx == 0.0)
      return 0.0;
    for (auto& v : x)
      v /= nx;
    op.apply_into(x, y);
    op.apply_adjoint_into(y, z);
    lambda = inner_product(std::span<const double>(x), std::span<const double>(z));
    x.swap(z);
  }
  return std::sqrt(std::max(lambda, 0.0));
}

} // namespace srtune

#endif // SRTUNE_FORWARD_MODEL_HPP
