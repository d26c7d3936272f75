#include <polarring/volume.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include <polarring/rng.hpp>

namespace polarring {
namespace {

TEST(Percentile, IntegerRanksOnArithmeticSequence) {
  // 101 values 0..100: rank q/100*(n-1) lands exactly on index q, so the
  // percentile is the value itself.
  std::vector<double> values;
  for (int i = 100; i >= 0; --i) values.push_back(i);  // unsorted on purpose
  EXPECT_DOUBLE_EQ(percentile(values, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(percentile(values, 5.0), 5.0);
  EXPECT_DOUBLE_EQ(percentile(values, 50.0), 50.0);
  EXPECT_DOUBLE_EQ(percentile(values, 95.0), 95.0);
  EXPECT_DOUBLE_EQ(percentile(values, 100.0), 100.0);
}

TEST(Percentile, InterpolatesBetweenClosestRanks) {
  std::vector<double> values = {10.0, 20.0};
  // rank = q/100; halfway between the two order statistics at q=50.
  EXPECT_DOUBLE_EQ(percentile(values, 50.0), 15.0);
  EXPECT_DOUBLE_EQ(percentile(values, 25.0), 12.5);
  EXPECT_DOUBLE_EQ(percentile(values, 100.0), 20.0);
}

TEST(Percentile, MatchesIndependentRankFormulaOnRandomSets) {
  Rng rng(41);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 1 + rng.index(200);
    std::vector<double> values(n);
    for (auto& v : values) v = rng.uniform(-5.0, 5.0);

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.0, 5.0, 37.5, 50.0, 95.0, 100.0, rng.uniform(0.0, 100.0)}) {
      double rank = q / 100.0 * static_cast<double>(n - 1);
      auto lo = static_cast<std::size_t>(std::floor(rank));
      double frac = rank - static_cast<double>(lo);
      double expected = sorted[lo];
      if (lo + 1 < n) expected += frac * (sorted[lo + 1] - sorted[lo]);
      EXPECT_NEAR(percentile(values, q), expected, 1e-12)
          << "n=" << n << " q=" << q;
      // The interpolated value never leaves the bracketing order statistics.
      double hi = sorted[std::min(lo + 1, n - 1)];
      EXPECT_GE(percentile(values, q), sorted[lo] - 1e-12);
      EXPECT_LE(percentile(values, q), hi + 1e-12);
    }
  }
}

TEST(Percentile, EmptyInputThrows) {
  EXPECT_THROW(percentile({}, 50.0), std::invalid_argument);
}

TEST(Normalize, AnchorsFifthAndNinetyFifthPercentiles) {
  // 101 voxels holding 0..100: p5 = 5 and p95 = 95, so value v maps to
  // clamp((v - 5) / 90, 0, 1).
  Volume vol({101, 1, 1}, {1, 1, 1}, {0, 0, 0});
  for (int i = 0; i < 101; ++i) vol.at(i, 0, 0) = static_cast<float>(i);

  NormalizeResult res = normalize_intensity(vol);
  ASSERT_FALSE(res.degenerate);
  EXPECT_FLOAT_EQ(res.volume.at(5, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(res.volume.at(95, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(res.volume.at(50, 0, 0), 0.5f);
  EXPECT_FLOAT_EQ(res.volume.at(23, 0, 0), static_cast<float>(18.0 / 90.0));
  // Values beyond the anchors clamp instead of overshooting.
  EXPECT_FLOAT_EQ(res.volume.at(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(res.volume.at(100, 0, 0), 1.0f);
  for (float v : res.volume.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Normalize, KeepsGridMetadata) {
  Volume vol({4, 3, 2}, {0.5, 0.6, 2.0}, {-1.0, 2.0, 3.0});
  Rng rng(7);
  for (auto& v : vol.data()) v = static_cast<float>(rng.uniform01());
  NormalizeResult res = normalize_intensity(vol);
  EXPECT_EQ(res.volume.dims(), vol.dims());
  EXPECT_EQ(res.volume.spacing(), vol.spacing());
  EXPECT_EQ(res.volume.origin(), vol.origin());
}

TEST(Normalize, ConstantVolumeIsDegenerateZeros) {
  Volume vol({6, 5, 4}, {1, 1, 1}, {0, 0, 0}, 7.75f);
  NormalizeResult res = normalize_intensity(vol);
  EXPECT_TRUE(res.degenerate);
  for (float v : res.volume.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(res.volume.dims(), vol.dims());
}

TEST(Normalize, NearConstantTailStretchesAndClamps) {
  // 95 zeros and 5 ones: p5 = 0 and p95 = 0.05 (interpolated between the
  // last zero at rank 94 and the first one at rank 95), so the ones clamp.
  Volume vol({100, 1, 1}, {1, 1, 1}, {0, 0, 0});
  for (int i = 95; i < 100; ++i) vol.at(i, 0, 0) = 1.0f;

  std::vector<double> values(vol.data().begin(), vol.data().end());
  EXPECT_NEAR(percentile(values, 95.0), 0.05, 1e-12);

  NormalizeResult res = normalize_intensity(vol);
  ASSERT_FALSE(res.degenerate);
  EXPECT_FLOAT_EQ(res.volume.at(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(res.volume.at(99, 0, 0), 1.0f);  // 1/0.05 = 20, clamped
}

TEST(Normalize, IdempotentOnceAnchored) {
  // 10 zeros, 80 mid values, 10 ones: p5 = 0 and p95 = 1 exactly, so a
  // second pass reproduces the first bit for bit.
  Volume vol({100, 1, 1}, {1, 1, 1}, {0, 0, 0});
  for (int i = 0; i < 100; ++i)
    vol.at(i, 0, 0) = i < 10 ? 0.0f : (i < 90 ? 0.5f : 1.0f);

  NormalizeResult once = normalize_intensity(vol);
  ASSERT_FALSE(once.degenerate);
  NormalizeResult twice = normalize_intensity(once.volume);
  ASSERT_FALSE(twice.degenerate);
  EXPECT_EQ(once.volume.data(), twice.volume.data());
}

TEST(Trilinear, VoxelCentersReadBack) {
  Volume vol({3, 3, 3}, {0.5, 0.5, 2.0}, {1.0, -2.0, 0.5});
  Rng rng(11);
  for (auto& v : vol.data()) v = static_cast<float>(rng.uniform(0.0, 10.0));
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        WorldPoint p = vol.world_from_voxel(i, j, k);
        EXPECT_NEAR(sample_trilinear(vol, p), vol.at(i, j, k), 1e-9);
      }
}

TEST(Trilinear, MidpointsAverageNeighbours) {
  Volume vol({2, 2, 2}, {1, 1, 1}, {0, 0, 0});
  vol.at(0, 0, 0) = 1.0f;
  vol.at(1, 0, 0) = 3.0f;
  vol.at(0, 1, 0) = 5.0f;
  vol.at(1, 1, 0) = 7.0f;
  EXPECT_NEAR(sample_trilinear(vol, {0.5, 0.0, 0.0}), 2.0, 1e-12);
  EXPECT_NEAR(sample_trilinear(vol, {0.0, 0.5, 0.0}), 3.0, 1e-12);
  EXPECT_NEAR(sample_trilinear(vol, {0.5, 0.5, 0.0}), 4.0, 1e-12);
  // Center of the cube averages all eight corners (the top four are 0).
  EXPECT_NEAR(sample_trilinear(vol, {0.5, 0.5, 0.5}), 2.0, 1e-12);
}

TEST(Trilinear, ReproducesAffineFieldsExactly) {
  // Trilinear weights sum to 1 and are linear per axis, so any affine
  // intensity field is interpolated without error.
  Volume vol({5, 4, 3}, {0.7, 1.1, 1.6}, {-1.0, 0.5, 2.0});
  auto field = [](const WorldPoint& p) {
    return 2.0 + 0.5 * p.x - 0.25 * p.y + 1.0 * p.z;
  };
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i)
        vol.at(i, j, k) = static_cast<float>(field(vol.world_from_voxel(i, j, k)));

  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    double u = rng.uniform(0.0, 4.0);
    double v = rng.uniform(0.0, 3.0);
    double w = rng.uniform(0.0, 2.0);
    WorldPoint p = vol.world_from_voxel(u, v, w);
    EXPECT_NEAR(sample_trilinear(vol, p), field(p), 1e-5);
  }
}

TEST(Trilinear, OutsideVoxelCentersReadsZero) {
  Volume vol({3, 3, 3}, {1, 1, 1}, {0, 0, 0}, 9.0f);
  EXPECT_EQ(sample_trilinear(vol, {-0.001, 1.0, 1.0}), 0.0);
  EXPECT_EQ(sample_trilinear(vol, {2.001, 1.0, 1.0}), 0.0);
  EXPECT_EQ(sample_trilinear(vol, {1.0, -0.5, 1.0}), 0.0);
  EXPECT_EQ(sample_trilinear(vol, {1.0, 1.0, 2.5}), 0.0);
  // The boundary itself is still inside.
  EXPECT_NEAR(sample_trilinear(vol, {0.0, 0.0, 0.0}), 9.0, 1e-12);
  EXPECT_NEAR(sample_trilinear(vol, {2.0, 2.0, 2.0}), 9.0, 1e-12);

  EXPECT_TRUE(inside_voxel_bounds(vol, {2.0, 2.0, 2.0}));
  EXPECT_FALSE(inside_voxel_bounds(vol, {2.001, 2.0, 2.0}));
}

TEST(CoordinateMaps, WorldVoxelRoundTrip) {
  Volume vol({8, 8, 8}, {0.5, 0.6, 3.0}, {-4.0, 1.0, 10.0});
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    double i = rng.uniform(0.0, 7.0);
    double j = rng.uniform(0.0, 7.0);
    double k = rng.uniform(0.0, 7.0);
    auto u = vol.voxel_from_world(vol.world_from_voxel(i, j, k));
    EXPECT_NEAR(u[0], i, 1e-12);
    EXPECT_NEAR(u[1], j, 1e-12);
    EXPECT_NEAR(u[2], k, 1e-12);
  }
  EXPECT_EQ(vol.slice_of(vol.world_from_voxel(0, 0, 5)), 5);
  EXPECT_EQ(vol.slice_of({0.0, 0.0, 10.0 + 5.4 * 3.0}), 5);
}

TEST(Construction, RejectsBadGrids) {
  EXPECT_THROW(Volume({0, 2, 2}, {1, 1, 1}, {0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(Volume({2, 2, 2}, {1, 0.0, 1}, {0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(Volume({2, 2, 2}, {1, 1, -0.5}, {0, 0, 0}),
               std::invalid_argument);
}

TEST(FlipSagittal, TwoVoxelSwap) {
  Volume vol({2, 1, 1}, {1, 1, 1}, {0, 0, 0});
  vol.at(0, 0, 0) = 3.0f;
  vol.at(1, 0, 0) = 8.0f;
  Volume flipped = flip_sagittal(vol);
  EXPECT_EQ(flipped.at(0, 0, 0), 8.0f);
  EXPECT_EQ(flipped.at(1, 0, 0), 3.0f);
}

TEST(FlipSagittal, InvolutionAndMultisetPreserved) {
  Volume vol({7, 5, 4}, {0.5, 0.5, 1.0}, {1, 2, 3});
  Rng rng(23);
  for (auto& v : vol.data()) v = static_cast<float>(rng.uniform01());

  Volume flipped = flip_sagittal(vol);
  EXPECT_EQ(flipped.dims(), vol.dims());
  Volume back = flip_sagittal(flipped);
  EXPECT_EQ(back.data(), vol.data());

  std::vector<float> a = vol.data(), b = flipped.data();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(FlipSagittal, MatchesMirroredAnalyticField) {
  // Fill one volume with f(i,j,k) and another with f(m-1-i,j,k); flipping
  // the first must reproduce the second exactly.
  std::array<int, 3> dims = {6, 5, 3};
  auto field = [](int i, int j, int k) {
    return static_cast<float>(i * 100 + j * 10 + k);
  };
  Volume vol(dims, {1, 1, 1}, {0, 0, 0});
  Volume mirrored(dims, {1, 1, 1}, {0, 0, 0});
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        vol.at(i, j, k) = field(i, j, k);
        mirrored.at(i, j, k) = field(dims[0] - 1 - i, j, k);
      }
  EXPECT_EQ(flip_sagittal(vol).data(), mirrored.data());
}

TEST(VolumeIO, RoundTripPreservesEverything) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(::testing::TempDir()) / "volume_io";
  fs::create_directories(dir);

  Volume vol({9, 7, 5}, {0.5, 0.5, 2.0}, {-3.0, 1.5, 12.0});
  Rng rng(17);
  for (auto& v : vol.data()) v = static_cast<float>(rng.uniform(-2.0, 2.0));

  std::string base = (dir / "scan").string();
  save_volume(vol, base);
  EXPECT_TRUE(fs::exists(dir / "scan.vol.json"));
  EXPECT_TRUE(fs::exists(dir / "scan.vol.raw"));

  Volume loaded = load_volume(base);
  EXPECT_EQ(loaded.dims(), vol.dims());
  EXPECT_EQ(loaded.spacing(), vol.spacing());
  EXPECT_EQ(loaded.origin(), vol.origin());
  EXPECT_EQ(loaded.data(), vol.data());

  // Either sidecar path names the same pair.
  Volume via_json = load_volume((dir / "scan.vol.json").string());
  Volume via_raw = load_volume((dir / "scan.vol.raw").string());
  EXPECT_EQ(via_json.data(), vol.data());
  EXPECT_EQ(via_raw.data(), vol.data());
}

TEST(VolumeIO, MissingAndTruncatedFilesThrow) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(::testing::TempDir()) / "volume_io_bad";
  fs::create_directories(dir);

  EXPECT_THROW(load_volume((dir / "nope").string()), std::runtime_error);

  Volume vol({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  std::string base = (dir / "cut").string();
  save_volume(vol, base);
  fs::resize_file(dir / "cut.vol.raw", 10);
  EXPECT_THROW(load_volume(base), std::runtime_error);
}

}  // namespace
}  // namespace polarring
