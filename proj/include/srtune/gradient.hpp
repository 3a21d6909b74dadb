#ifndef SRTUNE_GRADIENT_HPP
#define SRTUNE_GRADIENT_HPP

#include <cmath>
#include <span>

#include "srtune/geometry.hpp"

namespace srtune {

// Forward differences in voxel units with a replicate (Neumann) boundary: the
// difference across the last plane of each axis is zero. The gradient field is
// stored as three consecutive blocks of n values (x, y, z).

inline void gradient(const Dims& d, std::span<const double> x, std::span<double> g) {
  const std::size_t n = x.size();
  const std::size_t sx = 1, sy = static_cast<std::size_t>(d[0]), sz = sy * static_cast<std::size_t>(d[1]);
  std::size_t idx = 0;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i, ++idx) {
        const double v = x[idx];
        g[idx] = i + 1 < d[0] ? x[idx + sx] - v : 0.0;
        g[n + idx] = j + 1 < d[1] ? x[idx + sy] - v : 0.0;
        g[2 * n + idx] = k + 1 < d[2] ? x[idx + sz] - v : 0.0;
      }
}

/// Negative adjoint of `gradient`: ⟨∇x, g⟩ = −⟨x, div g⟩.
inline void divergence(const Dims& d, std::span<const double> g, std::span<double> out) {
  const std::size_t n = out.size();
  const std::size_t sy = static_cast<std::size_t>(d[0]), sz = sy * static_cast<std::size_t>(d[1]);
  std::size_t idx = 0;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i, ++idx) {
        double v = 0.0;
        if (i + 1 < d[0])
          v += g[idx];
        if (i > 0)
          v -= g[idx - 1];
        if (j + 1 < d[1])
          v += g[n + idx];
        if (j > 0)
          v -= g[n + idx - sy];
        if (k + 1 < d[2])
          v += g[2 * n + idx];
        if (k > 0)
          v -= g[2 * n + idx - sz];
        out[idx] = v;
      }
}

/// Upper bound on ‖∇‖² (4 per axis with more than one voxel).
inline double gradient_norm_sq_bound(const Dims& d) {
  double b = 0;
  for (int a = 0; a < 3; ++a)
    if (d[a] > 1)
      b += 4.0;
  return b;
}

/// Isotropic total variation Σ |∇x|.
inline double total_variation(std::span<const double> g) {
  const std::size_t n = g.size() / 3;
  double tv = 0;
  for (std::size_t i = 0; i < n; ++i)
    tv += std::sqrt(g[i] * g[i] + g[n + i] * g[n + i] + g[2 * n + i] * g[2 * n + i]);
  return tv;
}

/// ‖∇x‖².
inline double gradient_energy(std::span<const double> g) {
  double s = 0;
  for (double v : g)
    s += v * v;
  return s;
}

} // namespace srtune

#endif // SRTUNE_GRADIENT_HPP
