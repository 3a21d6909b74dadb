#ifndef SRTUNE_METRICS_HPP
#define SRTUNE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "srtune/errors.hpp"
#include "srtune/geometry.hpp"

namespace srtune {

/// Boolean voxel mask on a grid.
struct Mask {
  Dims dims{0, 0, 0};
  std::vector<std::uint8_t> data;
  std::string description;

  std::size_t count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

  static Mask full(const Geometry& g) { return {g.dims, std::vector<std::uint8_t>(g.size(), 1), "full"}; }
};

/// Nonzero support of `ref`, dilated by a ball of `radius` voxels.
inline Mask support_mask(const Volume3D& ref, int radius = 3) {
  const Dims& d = ref.geom.dims;
  Mask m{d, std::vector<std::uint8_t>(ref.data.size(), 0),
         "nonzero support dilated by " + std::to_string(radius) + " voxels"};
  std::vector<std::array<int, 3>> ball;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy + dz * dz <= radius * radius)
          ball.push_back({dx, dy, dz});
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        if (ref.data[ref.geom.index(i, j, k)] == 0.0)
          continue;
        for (const auto& o : ball) {
          const int a = i + o[0], b = j + o[1], c = k + o[2];
          if (a >= 0 && b >= 0 && c >= 0 && a < d[0] && b < d[1] && c < d[2])
            m.data[ref.geom.index(a, b, c)] = 1;
        }
      }
  return m;
}

namespace detail {

inline void check_metric_inputs(const Volume3D& test, const Volume3D& ref, const Mask& mask) {
  if (test.geom.dims != ref.geom.dims || test.data.size() != ref.data.size())
    throw ShapeError("metric: test and reference grids differ");
  if (mask.data.size() != ref.data.size())
    throw MaskError("metric: mask size differs from the images");
  if (mask.count() == 0)
    throw MaskError("metric: empty mask");
}

} // namespace detail

/// Maximum of `ref` within the mask.
inline double data_range(const Volume3D& ref, const Mask& mask) {
  double dr = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    if (mask.data[i])
      dr = std::max(dr, ref.data[i]);
  return dr;
}

/// 10·log10(DR² / MSE) over the mask, DR = max(ref in mask). Identical
/// images give +infinity.
inline double psnr(const Volume3D& test, const Volume3D& ref, const Mask& mask) {
  detail::check_metric_inputs(test, ref, mask);
  const double dr = data_range(ref, mask);
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    if (mask.data[i]) {
      const double e = test.data[i] - ref.data[i];
      sse += e * e;
      ++n;
    }
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(dr * dr / mse);
}

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double sigma = 1.5;
  int width = 11;
};

namespace detail {

// One axis of the Gaussian window: taps outside the grid are dropped and the
// rest renormalised, so the 3-D window is the product of per-axis windows.
inline void smooth_axis(std::vector<double>& v, const Dims& d, int axis, const std::vector<double>& taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(d[0])
                                                       : static_cast<std::size_t>(d[0]) * d[1];
  const int len = d[axis];
  std::vector<double> line(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
  const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  for (int b = 0; b < d[o2]; ++b)
    for (int a = 0; a < d[o1]; ++a) {
      int idx3[3] = {0, 0, 0};
      idx3[o1] = a;
      idx3[o2] = b;
      const std::size_t base = static_cast<std::size_t>(idx3[0]) +
                               static_cast<std::size_t>(d[0]) * (static_cast<std::size_t>(idx3[1]) +
                                                                 static_cast<std::size_t>(d[1]) * idx3[2]);
      for (int t = 0; t < len; ++t)
        line[static_cast<std::size_t>(t)] = v[base + stride * static_cast<std::size_t>(t)];
      for (int t = 0; t < len; ++t) {
        double acc = 0, wsum = 0;
        for (int o = -radius; o <= radius; ++o) {
          const int s = t + o;
          if (s < 0 || s >= len)
            continue;
          const double w = taps[static_cast<std::size_t>(o + radius)];
          acc += w * line[static_cast<std::size_t>(s)];
          wsum += w;
        }
        out[static_cast<std::size_t>(t)] = acc / wsum;
      }
      for (int t = 0; t < len; ++t)
        v[base + stride * static_cast<std::size_t>(t)] = out[static_cast<std::size_t>(t)];
    }
}

inline void gaussian_smooth(std::vector<double>& v, const Dims& d, const SsimParams& p) {
  const int radius = p.width / 2;
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  for (int o = -radius; o <= radius; ++o)
    taps[static_cast<std::size_t>(o + radius)] = std::exp(-(o * o) / (2.0 * p.sigma * p.sigma));
  for (int axis = 0; axis < 3; ++axis)
    smooth_axis(v, d, axis, taps);
}

} // namespace detail

/// Mean 3-D SSIM over the mask with a separable Gaussian window.
inline double ssim(const Volume3D& test, const Volume3D& ref, const Mask& mask, const SsimParams& params = {}) {
  detail::check_metric_inputs(test, ref, mask);
  if (params.width < 1 || params.width % 2 == 0 || !(params.sigma > 0))
    throw DomainError("ssim: window width must be odd and sigma positive");
  const double dr = data_range(ref, mask);
  const double c1 = (params.k1 * dr) * (params.k1 * dr);
  const double c2 = (params.k2 * dr) * (params.k2 * dr);
  const Dims& d = ref.geom.dims;
  const std::size_t n = ref.data.size();
  std::vector<double> mx = test.data, my = ref.data, sxx(n), syy(n), sxy(n);
  for (std::size_t i = 0; i < n; ++i) {
    sxx[i] = test.data[i] * test.data[i];
    syy[i] = ref.data[i] * ref.data[i];
    sxy[i] = test.data[i] * ref.data[i];
  }
  for (auto* v : {&mx, &my, &sxx, &syy, &sxy})
    detail::gaussian_smooth(*v, d, params);
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.data[i])
      continue;
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += den != 0.0 ? num / den : 1.0;
    ++count;
  }
  return acc / static_cast<double>(count);
}

struct MetricReport {
  double psnr_db = 0.0; // +infinity when identical
  bool psnr_infinite = false;
  double ssim = 0.0;
  std::string mask;
  std::size_t mask_voxels = 0;
  double data_range = 0.0;
};

/// Similarity of `a` to `b`, with `b` as the reference (its range sets DR),
/// so the report is not symmetric in (a, b).
inline MetricReport compare_reconstructions(const Volume3D& a, const Volume3D& b, const Mask& mask) {
  MetricReport r;
  r.psnr_db = psnr(a, b, mask);
  r.psnr_infinite = std::isinf(r.psnr_db);
  r.ssim = ssim(a, b, mask);
  r.mask = mask.description;
  r.mask_voxels = mask.count();
  r.data_range = data_range(b, mask);
  return r;
}

} // namespace srtune

#endif // SRTUNE_METRICS_HPP
