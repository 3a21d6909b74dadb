#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "srtune/acquisition.hpp"
#include "srtune/nifti.hpp"

using namespace srtune;
namespace fs = std::filesystem;

namespace {

class NiftiTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("srtune_nifti_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::vector<unsigned char> bytes(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  static void put_bytes(const std::string& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }

  fs::path dir_;
};

Volume3D random_float_volume(Dims d, std::uint64_t seed) {
  Volume3D v(Geometry::centered(d, 1.0));
  v.data = oracle::random_vector(v.geom.size(), seed, -5, 5);
  for (double& x : v.data)
    x = static_cast<float>(x);
  return v;
}

Geometry oblique_stack() {
  const Geometry hr = Geometry::centered({64, 64, 64}, 1.1);
  Geometry g = stack_geometry(hr, Orientation::coronal, SequenceParams{}, 2);
  RigidTransform t;
  t.rotation_deg = {3, -7, 11};
  g.axes = t.rotation_matrix() * g.axes;
  return g;
}

} // namespace

TEST_F(NiftiTest, HeaderSizeAndMagic) {
  const Volume3D v = random_float_volume({8, 8, 8}, 1);
  write_volume(v, path("a.nii"));
  const auto b = bytes(path("a.nii"));
  ASSERT_GE(b.size(), 352u);
  std::int32_t size = 0;
  std::memcpy(&size, b.data(), 4);
  EXPECT_EQ(b[0], 0x5c);
  EXPECT_EQ(b[1], 0x01);
  EXPECT_EQ(b[2], 0);
  EXPECT_EQ(b[3], 0);
  EXPECT_EQ(std::memcmp(b.data() + 344, "n+1\0", 4), 0);
}

TEST_F(NiftiTest, Float32RoundTripIsBitExact) {
  const Volume3D v = random_float_volume({8, 8, 8}, 2);
  write_volume(v, path("b.nii"));
  const Volume3D back = read_volume(path("b.nii"));
  EXPECT_EQ(back.geom.dims, v.geom.dims);
  ASSERT_EQ(back.data.size(), v.data.size());
  for (std::size_t i = 0; i < v.data.size(); ++i)
    EXPECT_EQ(back.data[i], v.data[i]);
}

TEST_F(NiftiTest, Float64AndGzipRoundTrips) {
  Volume3D v(Geometry::centered({5, 6, 7}, 0.5));
  v.data = oracle::random_vector(v.geom.size(), 3);
  write_volume(v, path("c.nii.gz"), NiftiType::float64);
  const auto b = bytes(path("c.nii.gz"));
  ASSERT_GE(b.size(), 2u);
  EXPECT_EQ(b[0], 0x1f);
  EXPECT_EQ(b[1], 0x8b);
  const Volume3D back = read_volume(path("c.nii.gz"));
  EXPECT_EQ(back.data, v.data);
}

TEST_F(NiftiTest, Int16RoundTrip) {
  Volume3D v(Geometry::centered({4, 4, 4}, 1.0));
  for (std::size_t i = 0; i < v.data.size(); ++i)
    v.data[i] = static_cast<double>(static_cast<int>(i) - 30);
  write_volume(v, path("d.nii"), NiftiType::int16);
  EXPECT_EQ(read_volume(path("d.nii")).data, v.data);
}

TEST_F(NiftiTest, AnisotropicObliqueAffineSurvives) {
  Volume3D v(oblique_stack());
  v.data.assign(v.geom.size(), 1.0);
  write_volume(v, path("e.nii"));
  const Volume3D back = read_volume(path("e.nii"));
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(back.geom.spacing[a], v.geom.spacing[a], 1e-6);
    EXPECT_NEAR(back.geom.origin[a], v.geom.origin[a], 1e-6);
    for (int c = 0; c < 3; ++c)
      EXPECT_NEAR(back.geom.axes[a][c], v.geom.axes[a][c], 1e-6);
  }
  EXPECT_NEAR(back.geom.spacing[2], 3.0, 1e-6);
  EXPECT_NEAR(back.geom.spacing[0], 1.1, 1e-6);
}

TEST_F(NiftiTest, StandardAffineFieldsUsedWithoutExtension) {
  Volume3D v(oblique_stack());
  v.data.assign(v.geom.size(), 2.0);
  write_volume(v, path("f.nii"));
  auto b = bytes(path("f.nii"));
  b[348] = 0; // drop the extension flag
  put_bytes(path("f.nii"), b);
  const Volume3D back = read_volume(path("f.nii"));
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(back.geom.spacing[a], v.geom.spacing[a], 1e-5);
    EXPECT_NEAR(back.geom.origin[a], v.geom.origin[a], 1e-4);
    for (int c = 0; c < 3; ++c)
      EXPECT_NEAR(back.geom.axes[a][c], v.geom.axes[a][c], 1e-5);
  }
  // With sform disabled the quaternion form takes over.
  b[254] = 0;
  b[255] = 0;
  put_bytes(path("f.nii"), b);
  const Volume3D q = read_volume(path("f.nii"));
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(q.geom.origin[a], v.geom.origin[a], 1e-4);
    for (int c = 0; c < 3; ++c)
      EXPECT_NEAR(q.geom.axes[a][c], v.geom.axes[a][c], 1e-5);
  }
}

TEST_F(NiftiTest, DistinctErrorKinds) {
  const Volume3D v = random_float_volume({8, 8, 8}, 4);
  write_volume(v, path("g.nii"));
  const auto good = bytes(path("g.nii"));

  auto expect_kind = [&](const std::vector<unsigned char>& b, NiftiError::Kind kind) {
    put_bytes(path("h.nii"), b);
    try {
      read_volume(path("h.nii"));
      ADD_FAILURE() << "expected a NIfTI error";
    } catch (const NiftiError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };

  auto bad_magic = good;
  bad_magic[345] = 'x';
  expect_kind(bad_magic, NiftiError::Kind::bad_magic);

  auto bad_type = good;
  bad_type[70] = 2; // unsigned char
  bad_type[71] = 0;
  expect_kind(bad_type, NiftiError::Kind::unsupported_datatype);

  expect_kind(std::vector<unsigned char>(good.begin(), good.end() - 10), NiftiError::Kind::truncated);
  expect_kind(std::vector<unsigned char>(good.begin(), good.begin() + 100), NiftiError::Kind::truncated);

  auto bad_size = good;
  bad_size[0] = 0x10;
  expect_kind(bad_size, NiftiError::Kind::bad_header);

  try {
    read_volume(path("missing.nii"));
    ADD_FAILURE() << "expected an io error";
  } catch (const NiftiError& e) {
    EXPECT_EQ(e.kind(), NiftiError::Kind::io);
  }
}

TEST_F(NiftiTest, ByteSwappedHeaderIsRead) {
  // Big-endian file assembled by hand: 2×1×1 float32.
  std::vector<unsigned char> b(352 + 8, 0);
  auto put_be = [&](std::size_t at, const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i)
      b[at + i] = c[n - 1 - i];
  };
  const std::int32_t hdr = 348;
  put_be(0, &hdr, 4);
  const std::int16_t dims[4] = {3, 2, 1, 1};
  for (int i = 0; i < 4; ++i)
    put_be(40 + 2 * static_cast<std::size_t>(i), &dims[i], 2);
  const std::int16_t type = 16, bitpix = 32;
  put_be(70, &type, 2);
  put_be(72, &bitpix, 2);
  const float pix[4] = {1, 2, 2, 2};
  for (int i = 0; i < 4; ++i)
    put_be(76 + 4 * static_cast<std::size_t>(i), &pix[i], 4);
  const float off = 352;
  put_be(108, &off, 4);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  const float vals[2] = {1.5f, -2.25f};
  put_be(352, &vals[0], 4);
  put_be(356, &vals[1], 4);
  put_bytes(path("be.nii"), b);
  const Volume3D v = read_volume(path("be.nii"));
  EXPECT_EQ(v.data, (std::vector<double>{1.5, -2.25}));
  EXPECT_EQ(v.geom.spacing[0], 2.0);
}
