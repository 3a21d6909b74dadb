#ifndef SRTUNE_NIFTI_HPP
#define SRTUNE_NIFTI_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "srtune/errors.hpp"
#include "srtune/geometry.hpp"

namespace srtune {

// NIfTI-1 single-file (.nii, optionally gzipped as .nii.gz) reader and writer
// for 3-D scalar volumes.

enum class NiftiType : std::int16_t { int16 = 4, float32 = 16, float64 = 64 };

namespace nifti {

inline constexpr int header_size = 348;
inline constexpr int extension_code_comment = 6;
inline constexpr const char* geometry_key = "srtune_geometry";

// Byte offsets of the header fields used here.
namespace off {
inline constexpr int sizeof_hdr = 0;
inline constexpr int dim_info = 39;
inline constexpr int dim = 40;
inline constexpr int datatype = 70;
inline constexpr int bitpix = 72;
inline constexpr int pixdim = 76;
inline constexpr int vox_offset = 108;
inline constexpr int scl_slope = 112;
inline constexpr int scl_inter = 116;
inline constexpr int xyzt_units = 123;
inline constexpr int descrip = 148;
inline constexpr int qform_code = 252;
inline constexpr int sform_code = 254;
inline constexpr int quatern_b = 256;
inline constexpr int qoffset_x = 268;
inline constexpr int srow_x = 280;
inline constexpr int magic = 344;
} // namespace off

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <class T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

class Writer {
public:
  explicit Writer(std::vector<unsigned char>& buf) : buf_(buf) {}

  template <class T>
  void put(std::size_t at, T v) {
    if constexpr (std::endian::native == std::endian::big)
      v = byteswap_value(v);
    std::memcpy(buf_.data() + at, &v, sizeof(T));
  }

private:
  std::vector<unsigned char>& buf_;
};

class Reader {
public:
  Reader(const std::vector<unsigned char>& buf, bool swap) : buf_(buf), swap_(swap) {}

  // Value in host order; `swap` comes from the sizeof_hdr probe.
  template <class T>
  T field(std::size_t at) const {
    T v = raw<T>(at);
    return swap_ ? byteswap_value(v) : v;
  }

  template <class T>
  T raw(std::size_t at) const {
    if (at + sizeof(T) > buf_.size())
      throw NiftiError(NiftiError::Kind::truncated, "nifti: file truncated");
    T v;
    std::memcpy(&v, buf_.data() + at, sizeof(T));
    return v;
  }

private:
  const std::vector<unsigned char>& buf_;
  bool swap_;
};

inline std::vector<unsigned char> read_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f)
    throw NiftiError(NiftiError::Kind::io, "nifti: cannot open " + path);
  std::vector<unsigned char> out;
  unsigned char chunk[1 << 16];
  for (;;) {
    const int n = gzread(f, chunk, sizeof(chunk));
    if (n < 0) {
      gzclose(f);
      throw NiftiError(NiftiError::Kind::truncated, "nifti: corrupt or truncated stream in " + path);
    }
    if (n == 0)
      break;
    out.insert(out.end(), chunk, chunk + n);
  }
  gzclose(f);
  return out;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  if (has_suffix(path, ".gz")) {
    // Fixed compression level and no embedded name or timestamp: stable bytes.
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f)
      throw NiftiError(NiftiError::Kind::io, "nifti: cannot create " + path);
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    if (gzclose(f) != Z_OK || n != static_cast<int>(bytes.size()))
      throw NiftiError(NiftiError::Kind::io, "nifti: write failed for " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw NiftiError(NiftiError::Kind::io, "nifti: cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw NiftiError(NiftiError::Kind::io, "nifti: write failed for " + path);
}

// Quaternion (b, c, d) and qfac of a direction matrix, following the
// standard NIfTI-1 recipe.
inline void to_quaternion(Mat3 r, double& b, double& c, double& d, double& qfac) {
  qfac = determinant(r) < 0 ? -1.0 : 1.0;
  if (qfac < 0)
    for (int i = 0; i < 3; ++i)
      r[i][2] = -r[i][2];
  const double trace = r[0][0] + r[1][1] + r[2][2];
  double a;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    a = 0.25 * s;
    b = (r[2][1] - r[1][2]) / s;
    c = (r[0][2] - r[2][0]) / s;
    d = (r[1][0] - r[0][1]) / s;
  } else if (r[0][0] > r[1][1] && r[0][0] > r[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]);
    a = (r[2][1] - r[1][2]) / s;
    b = 0.25 * s;
    c = (r[0][1] + r[1][0]) / s;
    d = (r[0][2] + r[2][0]) / s;
  } else if (r[1][1] > r[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]);
    a = (r[0][2] - r[2][0]) / s;
    b = (r[0][1] + r[1][0]) / s;
    c = 0.25 * s;
    d = (r[1][2] + r[2][1]) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]);
    a = (r[1][0] - r[0][1]) / s;
    b = (r[0][2] + r[2][0]) / s;
    c = (r[1][2] + r[2][1]) / s;
    d = 0.25 * s;
  }
  if (a < 0) {
    b = -b;
    c = -c;
    d = -d;
  }
}

inline Mat3 from_quaternion(double b, double c, double d, double qfac) {
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  Mat3 r{{{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
          {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
          {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}}};
  if (qfac < 0)
    for (int i = 0; i < 3; ++i)
      r[i][2] = -r[i][2];
  return r;
}

// Gram-Schmidt on the columns; float32 header matrices are only
// orthonormal to ~1e-7.
inline Mat3 orthonormalize(const Mat3& m) {
  Vec3 c0 = column(m, 0), c1 = column(m, 1), c2 = column(m, 2);
  c0 = (1.0 / norm(c0)) * c0;
  c1 = c1 - dot(c1, c0) * c0;
  c1 = (1.0 / norm(c1)) * c1;
  c2 = c2 - dot(c2, c0) * c0 - dot(c2, c1) * c1;
  c2 = (1.0 / norm(c2)) * c2;
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    out[i][0] = c0[i];
    out[i][1] = c1[i];
    out[i][2] = c2[i];
  }
  return out;
}

inline nlohmann::json geometry_json(const Geometry& g) {
  return {{geometry_key,
           {{"spacing", {g.spacing[0], g.spacing[1], g.spacing[2]}},
            {"origin", {g.origin[0], g.origin[1], g.origin[2]}},
            {"axes", {{g.axes[0][0], g.axes[0][1], g.axes[0][2]},
                      {g.axes[1][0], g.axes[1][1], g.axes[1][2]},
                      {g.axes[2][0], g.axes[2][1], g.axes[2][2]}}}}}};
}

inline int bitpix_of(NiftiType t) { return t == NiftiType::int16 ? 16 : t == NiftiType::float32 ? 32 : 64; }

} // namespace nifti

/// Writes `v` as NIfTI-1 (.nii, or gzipped for a .gz suffix). The affine is
/// stored in sform/qform and, at full double precision, in a comment
/// extension so that geometry survives the float32 header fields.
inline void write_volume(const Volume3D& v, const std::string& path, NiftiType type = NiftiType::float32) {
  using namespace nifti;
  v.geom.validate();
  if (v.data.size() != v.geom.size())
    throw ShapeError("write_volume: data size does not match geometry");
  const std::string ext_text = geometry_json(v.geom).dump();
  const std::size_t esize = (8 + ext_text.size() + 1 + 15) / 16 * 16;
  const std::size_t vox_offset = header_size + 4 + esize;
  const int bytes_per = bitpix_of(type) / 8;
  std::vector<unsigned char> buf(vox_offset + v.data.size() * static_cast<std::size_t>(bytes_per), 0);
  Writer w(buf);

  w.put<std::int32_t>(off::sizeof_hdr, header_size);
  buf[off::dim_info] = 0;
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(v.geom.dims[0]), static_cast<std::int16_t>(v.geom.dims[1]),
                               static_cast<std::int16_t>(v.geom.dims[2]), 1, 1, 1, 1};
  for (int a = 0; a < 3; ++a)
    if (v.geom.dims[a] > std::numeric_limits<std::int16_t>::max())
      throw GeometryError("write_volume: dimension exceeds the NIfTI-1 limit");
  for (int i = 0; i < 8; ++i)
    w.put<std::int16_t>(off::dim + 2 * i, dim[i]);
  w.put<std::int16_t>(off::datatype, static_cast<std::int16_t>(type));
  w.put<std::int16_t>(off::bitpix, static_cast<std::int16_t>(bitpix_of(type)));

  double qb, qc, qd, qfac;
  to_quaternion(v.geom.axes, qb, qc, qd, qfac);
  const float pixdim[8] = {static_cast<float>(qfac), static_cast<float>(v.geom.spacing[0]),
                           static_cast<float>(v.geom.spacing[1]), static_cast<float>(v.geom.spacing[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i)
    w.put<float>(off::pixdim + 4 * i, pixdim[i]);
  w.put<float>(off::vox_offset, static_cast<float>(vox_offset));
  w.put<float>(off::scl_slope, 1.0f);
  w.put<float>(off::scl_inter, 0.0f);
  buf[off::xyzt_units] = 2; // mm
  const char descrip[] = "srtune volume";
  std::memcpy(buf.data() + off::descrip, descrip, sizeof(descrip) - 1);
  w.put<std::int16_t>(off::qform_code, 1);
  w.put<std::int16_t>(off::sform_code, 1);
  w.put<float>(off::quatern_b, static_cast<float>(qb));
  w.put<float>(off::quatern_b + 4, static_cast<float>(qc));
  w.put<float>(off::quatern_b + 8, static_cast<float>(qd));
  for (int i = 0; i < 3; ++i)
    w.put<float>(off::qoffset_x + 4 * i, static_cast<float>(v.geom.origin[i]));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c)
      w.put<float>(off::srow_x + 16 * r + 4 * c, static_cast<float>(v.geom.axes[r][c] * v.geom.spacing[c]));
    w.put<float>(off::srow_x + 16 * r + 12, static_cast<float>(v.geom.origin[r]));
  }
  std::memcpy(buf.data() + off::magic, "n+1\0", 4);

  buf[header_size] = 1; // extension present
  w.put<std::int32_t>(header_size + 4, static_cast<std::int32_t>(esize));
  w.put<std::int32_t>(header_size + 8, extension_code_comment);
  std::memcpy(buf.data() + header_size + 12, ext_text.data(), ext_text.size());

  for (std::size_t n = 0; n < v.data.size(); ++n) {
    const std::size_t at = vox_offset + n * static_cast<std::size_t>(bytes_per);
    switch (type) {
    case NiftiType::int16: {
      const double r = std::round(v.data[n]);
      w.put<std::int16_t>(at, static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0)));
      break;
    }
    case NiftiType::float32:
      w.put<float>(at, static_cast<float>(v.data[n]));
      break;
    case NiftiType::float64:
      w.put<double>(at, v.data[n]);
      break;
    }
  }
  write_file(path, buf);
}

/// Reads a NIfTI-1 single-file volume (.nii or .nii.gz) of type int16,
/// float32 or float64. Distinct NiftiError kinds for a bad magic, an
/// unsupported datatype and a truncated file.
inline Volume3D read_volume(const std::string& path) {
  using namespace nifti;
  const std::vector<unsigned char> buf = read_file(path);
  if (buf.size() < static_cast<std::size_t>(header_size))
    throw NiftiError(NiftiError::Kind::truncated, "nifti: " + path + " is shorter than a header");
  const Reader probe(buf, false);
  const std::int32_t raw_size = probe.raw<std::int32_t>(off::sizeof_hdr);
  bool swap;
  if (raw_size == header_size)
    swap = false;
  else if (byteswap_value(raw_size) == header_size)
    swap = true;
  else
    throw NiftiError(NiftiError::Kind::bad_header, "nifti: sizeof_hdr is not 348 in " + path);
  const Reader r(buf, swap);
  if (std::memcmp(buf.data() + off::magic, "n+1\0", 4) != 0)
    throw NiftiError(NiftiError::Kind::bad_magic, "nifti: magic is not \"n+1\" in " + path);

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i)
    dim[i] = r.field<std::int16_t>(off::dim + 2 * i);
  if (dim[0] < 1 || dim[0] > 7)
    throw NiftiError(NiftiError::Kind::bad_header, "nifti: invalid dim[0]");
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] != 1)
      throw NiftiError(NiftiError::Kind::bad_header, "nifti: only 3-D scalar volumes are supported");
  Geometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = a < dim[0] ? dim[a + 1] : 1;
    if (g.dims[a] < 1)
      throw NiftiError(NiftiError::Kind::bad_header, "nifti: non-positive dimension");
  }
  const auto type = r.field<std::int16_t>(off::datatype);
  if (type != static_cast<std::int16_t>(NiftiType::int16) && type != static_cast<std::int16_t>(NiftiType::float32) &&
      type != static_cast<std::int16_t>(NiftiType::float64))
    throw NiftiError(NiftiError::Kind::unsupported_datatype,
                     "nifti: unsupported datatype code " + std::to_string(type));
  const int bytes_per = bitpix_of(static_cast<NiftiType>(type)) / 8;
  const float vox_offset_f = r.field<float>(off::vox_offset);
  if (!(vox_offset_f >= static_cast<float>(header_size)))
    throw NiftiError(NiftiError::Kind::bad_header, "nifti: vox_offset before the end of the header");
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
  if (buf.size() < vox_offset + g.size() * static_cast<std::size_t>(bytes_per))
    throw NiftiError(NiftiError::Kind::truncated, "nifti: voxel data truncated in " + path);

  // Geometry: exact extension, else sform, else qform, else pixdim.
  bool have_geometry = false;
  for (std::size_t at = header_size + 4; buf[header_size] != 0 && at + 8 <= vox_offset;) {
    const auto esize = static_cast<std::size_t>(r.field<std::int32_t>(at));
    const auto ecode = r.field<std::int32_t>(at + 4);
    if (esize < 16 || esize % 16 != 0 || at + esize > vox_offset)
      break;
    if (ecode == extension_code_comment) {
      const char* text = reinterpret_cast<const char*>(buf.data() + at + 8);
      const std::string body(text, strnlen(text, esize - 8));
      const auto doc = nlohmann::json::parse(body, nullptr, false);
      if (!doc.is_discarded() && doc.is_object() && doc.contains(geometry_key)) {
        try {
          const auto& gj = doc.at(geometry_key);
          for (int a = 0; a < 3; ++a) {
            g.spacing[a] = gj.at("spacing").at(a).get<double>();
            g.origin[a] = gj.at("origin").at(a).get<double>();
            for (int c = 0; c < 3; ++c)
              g.axes[a][c] = gj.at("axes").at(a).at(c).get<double>();
          }
          have_geometry = true;
        } catch (const nlohmann::json::exception&) {
          have_geometry = false;
        }
      }
    }
    at += esize;
  }
  if (!have_geometry) {
    for (int a = 0; a < 3; ++a) {
      const float p = r.field<float>(off::pixdim + 4 * (a + 1));
      g.spacing[a] = p > 0 ? p : 1.0;
    }
    const auto sform = r.field<std::int16_t>(off::sform_code);
    const auto qform = r.field<std::int16_t>(off::qform_code);
    if (sform > 0) {
      Mat3 m{};
      for (int row = 0; row < 3; ++row) {
        for (int c = 0; c < 3; ++c)
          m[row][c] = r.field<float>(off::srow_x + 16 * row + 4 * c);
        g.origin[row] = r.field<float>(off::srow_x + 16 * row + 12);
      }
      for (int c = 0; c < 3; ++c)
        g.spacing[c] = norm(column(m, c));
      for (int row = 0; row < 3; ++row)
        for (int c = 0; c < 3; ++c)
          m[row][c] /= g.spacing[c];
      g.axes = orthonormalize(m);
    } else if (qform > 0) {
      const float qfac = r.field<float>(off::pixdim);
      g.axes = orthonormalize(from_quaternion(r.field<float>(off::quatern_b), r.field<float>(off::quatern_b + 4),
                                              r.field<float>(off::quatern_b + 8), qfac < 0 ? -1.0 : 1.0));
      for (int a = 0; a < 3; ++a)
        g.origin[a] = r.field<float>(off::qoffset_x + 4 * a);
    }
  }
  try {
    g.validate();
  } catch (const GeometryError& e) {
    throw NiftiError(NiftiError::Kind::bad_header, std::string("nifti: ") + e.what());
  }

  double slope = r.field<float>(off::scl_slope);
  double inter = r.field<float>(off::scl_inter);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter))
    inter = 0.0;
  Volume3D v(g);
  for (std::size_t n = 0; n < v.data.size(); ++n) {
    const std::size_t at = vox_offset + n * static_cast<std::size_t>(bytes_per);
    double value = 0.0;
    switch (static_cast<NiftiType>(type)) {
    case NiftiType::int16:
      value = r.field<std::int16_t>(at);
      break;
    case NiftiType::float32:
      value = r.field<float>(at);
      break;
    case NiftiType::float64:
      value = r.field<double>(at);
      break;
    }
    v.data[n] = slope == 1.0 && inter == 0.0 ? value : slope * value + inter;
  }
  return v;
}

} // namespace srtune

#endif // SRTUNE_NIFTI_HPP
