#ifndef SRTUNE_GEOMETRY_HPP
#define SRTUNE_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "srtune/errors.hpp"

namespace srtune {

using Vec3 = std::array<double, 3>;

/// Row-major 3x3 matrix, m[row][col].
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

inline Vec3 operator*(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
  return r;
}

inline Mat3 transpose(const Mat3& m) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[i][j] = m[j][i];
  return r;
}

inline double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline Vec3 column(const Mat3& m, int c) { return {m[0][c], m[1][c], m[2][c]}; }

/// Largest deviation of mᵀm from the identity.
inline double orthonormality_error(const Mat3& m) {
  const Mat3 g = transpose(m) * m;
  double err = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      err = std::max(err, std::abs(g[i][j] - (i == j ? 1.0 : 0.0)));
  return err;
}

using Dims = std::array<int, 3>;

/// Voxel grid placed in world space (mm). Voxel (i,j,k) sits at
/// origin + axes * (spacing ⊙ (i,j,k)).
struct Geometry {
  Dims dims{1, 1, 1};
  Vec3 spacing{1, 1, 1};
  Vec3 origin{0, 0, 0};
  Mat3 axes = identity3();

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }

  Vec3 world(const Vec3& idx) const {
    return origin + axes * Vec3{spacing[0] * idx[0], spacing[1] * idx[1], spacing[2] * idx[2]};
  }

  Vec3 world(int i, int j, int k) const { return world(Vec3{double(i), double(j), double(k)}); }

  /// Continuous voxel index of a world point.
  Vec3 continuous_index(const Vec3& w) const {
    const Vec3 local = transpose(axes) * (w - origin);
    return {local[0] / spacing[0], local[1] / spacing[1], local[2] / spacing[2]};
  }

  Vec3 extent() const {
    return {dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]};
  }

  bool isotropic(double tol = 1e-9) const {
    return std::abs(spacing[0] - spacing[1]) <= tol && std::abs(spacing[0] - spacing[2]) <= tol;
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1)
        throw GeometryError("geometry: dimensions must be positive");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw GeometryError("geometry: voxel sizes must be positive");
    }
    if (orthonormality_error(axes) > 1e-9)
      throw GeometryError("geometry: direction matrix is not orthonormal");
  }

  /// Isotropic grid of n³ voxels centred on the world origin.
  static Geometry centered(Dims d, double voxel) {
    Geometry g;
    g.dims = d;
    g.spacing = {voxel, voxel, voxel};
    for (int a = 0; a < 3; ++a)
      g.origin[a] = -0.5 * (d[a] - 1) * voxel;
    return g;
  }
};

inline bool same_grid(const Geometry& a, const Geometry& b, double tol = 1e-9) {
  if (a.dims != b.dims)
    return false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.spacing[i] - b.spacing[i]) > tol || std::abs(a.origin[i] - b.origin[i]) > tol)
      return false;
    for (int j = 0; j < 3; ++j)
      if (std::abs(a.axes[i][j] - b.axes[i][j]) > tol)
        return false;
  }
  return true;
}

/// Scalar 3-D image. Data is x-fastest.
struct Volume3D {
  Geometry geom;
  std::vector<double> data;

  Volume3D() = default;
  explicit Volume3D(const Geometry& g, double fill = 0.0) : geom(g), data(g.size(), fill) {}

  double& at(int i, int j, int k) { return data[geom.index(i, j, k)]; }
  double at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }

  void validate() const {
    geom.validate();
    if (data.size() != geom.size())
      throw ShapeError("volume: data length does not match dimensions");
    for (double v : data)
      if (!std::isfinite(v))
        throw ShapeError("volume: non-finite intensity");
  }
};

/// Rotation + translation as a matrix pair; maps p to R p + t.
struct Rigid {
  Mat3 rotation = identity3();
  Vec3 translation{0, 0, 0};

  Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }

  Rigid inverse() const {
    const Mat3 rt = srtune::transpose(rotation);
    const Vec3 t = rt * translation;
    return {rt, {-t[0], -t[1], -t[2]}};
  }

  /// (this ∘ other)(p) = this(other(p)).
  Rigid compose(const Rigid& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

/// Euler angles (degrees, intrinsic Z-Y-X) plus translation (mm). Rotation is
/// about the world origin, which the simulator places at the volume centre.
struct RigidTransform {
  Vec3 rotation_deg{0, 0, 0}; // about x, y, z
  Vec3 translation_mm{0, 0, 0};

  bool is_identity() const {
    return rotation_deg == Vec3{0, 0, 0} && translation_mm == Vec3{0, 0, 0};
  }

  Mat3 rotation_matrix() const {
    constexpr double deg = std::numbers::pi / 180.0;
    const double a = rotation_deg[0] * deg, b = rotation_deg[1] * deg, c = rotation_deg[2] * deg;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cb = std::cos(b), sb = std::sin(b);
    const double cc = std::cos(c), sc = std::sin(c);
    const Mat3 rx{{{1, 0, 0}, {0, ca, -sa}, {0, sa, ca}}};
    const Mat3 ry{{{cb, 0, sb}, {0, 1, 0}, {-sb, 0, cb}}};
    const Mat3 rz{{{cc, -sc, 0}, {sc, cc, 0}, {0, 0, 1}}};
    // Intrinsic z, then y', then x'' composes as Rz·Ry·Rx.
    return rz * ry * rx;
  }

  Rigid matrix() const { return {rotation_matrix(), translation_mm}; }

  Vec3 operator()(const Vec3& p) const { return matrix()(p); }
};

namespace detail {

inline double snap(double c) {
  const double r = std::round(c);
  return std::abs(c - r) < 1e-9 ? r : c;
}

} // namespace detail

/// Trilinear sample of `src` at a continuous voxel index. Neighbours outside
/// the grid contribute zero.
inline double trilinear_at(const Volume3D& src, Vec3 idx) {
  const Dims& n = src.geom.dims;
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    idx[a] = detail::snap(idx[a]);
    if (idx[a] <= -1.0 || idx[a] >= n[a])
      return 0.0;
    const double f = std::floor(idx[a]);
    base[a] = static_cast<int>(f);
    frac[a] = idx[a] - f;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const int k = base[2] + dz;
    const double wz = dz ? frac[2] : 1.0 - frac[2];
    if (k < 0 || k >= n[2] || wz == 0.0)
      continue;
    for (int dy = 0; dy < 2; ++dy) {
      const int j = base[1] + dy;
      const double wy = dy ? frac[1] : 1.0 - frac[1];
      if (j < 0 || j >= n[1] || wy == 0.0)
        continue;
      for (int dx = 0; dx < 2; ++dx) {
        const int i = base[0] + dx;
        const double wx = dx ? frac[0] : 1.0 - frac[0];
        if (i < 0 || i >= n[0] || wx == 0.0)
          continue;
        acc += wx * wy * wz * src.data[src.geom.index(i, j, k)];
      }
    }
  }
  return acc;
}

/// Resample `src` onto `target`: output voxel at world point w takes the
/// trilinear value of src at transform(w).
inline Volume3D resample(const Volume3D& src, const RigidTransform& transform, const Geometry& target) {
  src.geom.validate();
  target.validate();
  const Rigid t = transform.matrix();
  if (std::abs(determinant(t.rotation) - 1.0) > 1e-9)
    throw GeometryError("resample: transform is not a proper rotation");
  Volume3D out(target);
  const bool identity = transform.is_identity();
  for (int k = 0; k < target.dims[2]; ++k)
    for (int j = 0; j < target.dims[1]; ++j)
      for (int i = 0; i < target.dims[0]; ++i) {
        const Vec3 w = target.world(i, j, k);
        const Vec3 p = identity ? w : t(w);
        out.data[target.index(i, j, k)] = trilinear_at(src, src.geom.continuous_index(p));
      }
  return out;
}

inline double inner_product(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("inner_product: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += a[i] * b[i];
  return acc;
}

inline double inner_product(const Volume3D& a, const Volume3D& b) {
  if (a.geom.dims != b.geom.dims)
    throw ShapeError("inner_product: dimension mismatch");
  return inner_product(std::span<const double>(a.data), std::span<const double>(b.data));
}

} // namespace srtune

#endif // SRTUNE_GEOMETRY_HPP
