#include <polarring/centerline.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

namespace polarring {
namespace {

TEST(Proximity, MatchesClosedFormAndSupport) {
  Rng rng(101);
  for (int rep = 0; rep < 1000; ++rep) {
    ProximityParams p;
    p.a = rng.uniform(0.5, 10.0);
    p.d_m_mm = rng.uniform(0.5, 10.0);
    double d = rng.uniform(0.0, 2.0 * p.d_m_mm);
    double got = proximity_value(d, p);
    if (d >= p.d_m_mm) {
      EXPECT_EQ(got, 0.0);
    } else {
      double expected = std::exp(p.a * (1.0 - d / p.d_m_mm)) - 1.0;
      EXPECT_NEAR(got, expected, 1e-12 * std::max(1.0, expected));
      EXPECT_GT(got, 0.0);
    }
  }

  ProximityParams p;
  EXPECT_DOUBLE_EQ(proximity_value(0.0, p), std::exp(p.a) - 1.0);
  EXPECT_EQ(proximity_value(p.d_m_mm, p), 0.0);  // cutoff itself reads zero
  EXPECT_GT(proximity_value(1.0, p), proximity_value(2.0, p));
  EXPECT_GT(proximity_value(2.0, p), proximity_value(4.9, p));
}

TEST(Proximity, MapMatchesIndependentDistanceOracle) {
  PhantomConfig cfg;
  cfg.seed = 14;
  auto [vol, truth] = generate_phantom(cfg);
  ProximityParams params;
  ProximityMap map = proximity_map(truth, params);

  ASSERT_EQ(map.internal_lines.size(), 1u);
  EXPECT_TRUE(map.external_lines.empty());
  for (float v : map.external_map.data()) EXPECT_EQ(v, 0.0f);

  // Unpruned closest-approach search over every polyline segment.
  const Polyline& line = map.internal_lines[0];
  auto oracle_dist = [&](const WorldPoint& p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s + 1 < line.size(); ++s) {
      const WorldPoint& a = line[s];
      const WorldPoint& b = line[s + 1];
      double ex = b.x - a.x, ey = b.y - a.y, ez = b.z - a.z;
      double len2 = ex * ex + ey * ey + ez * ez;
      double t = len2 > 0.0 ? ((p.x - a.x) * ex + (p.y - a.y) * ey +
                               (p.z - a.z) * ez) /
                                  len2
                            : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      double dx = p.x - (a.x + t * ex);
      double dy = p.y - (a.y + t * ey);
      double dz = p.z - (a.z + t * ez);
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    return best;
  };

  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    int i = static_cast<int>(rng.index(cfg.dims[0]));
    int j = static_cast<int>(rng.index(cfg.dims[1]));
    int k = static_cast<int>(rng.index(cfg.dims[2]));
    double d = oracle_dist(vol.world_from_voxel(i, j, k));
    double expected = proximity_value(d, params);
    double got = map.internal_map.at(i, j, k);
    EXPECT_NEAR(got, expected, 1e-4 * std::max(1.0, expected))
        << "voxel " << i << "," << j << "," << k;
    if (d < params.d_m_mm - 1e-9) EXPECT_GT(got, 0.0f);
    if (d > params.d_m_mm + 1e-9) EXPECT_EQ(got, 0.0f);
  }

  ProximityParams bad;
  bad.a = 0.0;
  EXPECT_THROW(proximity_map(truth, bad), std::invalid_argument);
  bad = ProximityParams{};
  bad.d_m_mm = -1.0;
  EXPECT_THROW(proximity_map(truth, bad), std::invalid_argument);
}

TEST(Degrade, NoOpConfigReturnsInputBitwise) {
  PhantomConfig cfg;
  cfg.seed = 6;
  auto [vol, truth] = generate_phantom(cfg);
  ProximityMap map = proximity_map(truth);
  ProximityMap same = degrade_map(map, {}, 123);
  EXPECT_EQ(same.internal_map.data(), map.internal_map.data());
  EXPECT_EQ(same.external_map.data(), map.external_map.data());
}

TEST(Degrade, AdditiveNoiseIsClippedAndSeeded) {
  PhantomConfig cfg;
  cfg.seed = 6;
  auto [vol, truth] = generate_phantom(cfg);
  ProximityMap map = proximity_map(truth);

  DegradeConfig deg;
  deg.sigma_add = 0.5;
  ProximityMap a = degrade_map(map, deg, 7);
  ProximityMap b = degrade_map(map, deg, 7);
  ProximityMap c = degrade_map(map, deg, 8);
  EXPECT_EQ(a.internal_map.data(), b.internal_map.data());
  EXPECT_NE(a.internal_map.data(), c.internal_map.data());
  for (float v : a.internal_map.data()) EXPECT_GE(v, 0.0f);
  EXPECT_NE(a.internal_map.data(), map.internal_map.data());
}

TEST(Degrade, DropoutZeroesTheFirstSlicePeak) {
  PhantomConfig cfg;
  cfg.seed = 6;
  auto [vol, truth] = generate_phantom(cfg);
  ProximityMap map = proximity_map(truth);

  // Remember the untouched argmax of slice 0 before degrading.
  int bi = 0, bj = 0;
  float best = -1.0f;
  for (int j = 0; j < cfg.dims[1]; ++j)
    for (int i = 0; i < cfg.dims[0]; ++i)
      if (map.internal_map.at(i, j, 0) > best) {
        best = map.internal_map.at(i, j, 0);
        bi = i;
        bj = j;
      }
  ASSERT_GT(best, 0.0f);

  DegradeConfig deg;
  deg.dropout_prob = 1.0;
  ProximityMap dropped = degrade_map(map, deg, 55);
  EXPECT_EQ(dropped.internal_map.at(bi, bj, 0), 0.0f);
  for (std::size_t n = 0; n < map.internal_map.size(); ++n)
    EXPECT_LE(dropped.internal_map.data()[n], map.internal_map.data()[n]);
}

TEST(Degrade, WobbleShiftsPeaksBoundedly) {
  PhantomConfig cfg;
  cfg.seed = 16;
  auto [vol, truth] = generate_phantom(cfg);
  ProximityMap map = proximity_map(truth);

  DegradeConfig deg;
  deg.wobble_mm = 1.0;
  ProximityMap wob = degrade_map(map, deg, 9);
  EXPECT_NE(wob.internal_map.data(), map.internal_map.data());
  EXPECT_EQ(degrade_map(map, deg, 9).internal_map.data(),
            wob.internal_map.data());

  auto slice_argmax = [&](const Volume& m, int k) {
    int bi = 0, bj = 0;
    float best = -1.0f;
    for (int j = 0; j < m.dims()[1]; ++j)
      for (int i = 0; i < m.dims()[0]; ++i)
        if (m.at(i, j, k) > best) {
          best = m.at(i, j, k);
          bi = i;
          bj = j;
        }
    return std::array<int, 2>{bi, bj};
  };
  // A 1 mm lateral wobble moves any 0.5 mm-grid peak by at most 2 voxels
  // plus one voxel of re-discretization slack per axis.
  for (int k = 4; k < cfg.dims[2] - 4; ++k) {
    auto a = slice_argmax(map.internal_map, k);
    auto b = slice_argmax(wob.internal_map, k);
    EXPECT_LE(std::abs(a[0] - b[0]), 3) << "slice " << k;
    EXPECT_LE(std::abs(a[1] - b[1]), 3) << "slice " << k;
  }
}

TEST(Degrade, WobbleWithoutSourceLinesThrows) {
  ProximityMap bare;
  bare.internal_map = Volume({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  bare.external_map = Volume({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
  DegradeConfig deg;
  deg.wobble_mm = 0.5;
  EXPECT_THROW(degrade_map(bare, deg, 1), std::invalid_argument);

  DegradeConfig bad;
  bad.dropout_prob = 1.5;
  EXPECT_THROW(degrade_map(bare, bad, 1), std::invalid_argument);
  bad = DegradeConfig{};
  bad.sigma_add = -0.1;
  EXPECT_THROW(degrade_map(bare, bad, 1), std::invalid_argument);
}

TEST(Trace, StraightTubeStaysOnAxis) {
  PhantomConfig cfg;
  cfg.sinusoid_amplitude_mm = 0.0;
  cfg.plaque_amplitude_mm = 0.0;
  cfg.seed = 2;
  auto [vol, truth] = generate_phantom(cfg);
  ProximityMap map = proximity_map(truth);

  CenterlinePath path = trace_channel(map.internal_map, 50);
  ASSERT_GE(path.voxels.size(), static_cast<std::size_t>(cfg.dims[2]));
  EXPECT_EQ(path.voxels.front()[2], 0);
  EXPECT_EQ(path.voxels.back()[2], cfg.dims[2] - 1);

  // The axis passes between voxels at (23.5, 23.5); one voxel of slack
  // allows any of the four nearest columns.
  for (const auto& v : path.voxels) {
    double dx = v[0] - 23.5;
    double dy = v[1] - 23.5;
    EXPECT_LE(std::hypot(dx, dy), 1.0)
        << "voxel " << v[0] << "," << v[1] << "," << v[2];
  }
  EXPECT_NEAR(path.cost, 0.0, 1e-9);
}

TEST(Trace, UniformMapTakesGridGeodesics) {
  // With a constant field every node costs zero, so the path cost is zero
  // and the tie-break must fall back to the fewest 26-connected steps,
  // i.e. the Chebyshev distance between the endpoints.
  auto check = [](const Volume& map, VoxelIndex s, VoxelIndex t) {
    CenterlinePath path = trace_centerline(map, s, t);
    EXPECT_EQ(path.cost, 0.0);
    int cheb = std::max({std::abs(s[0] - t[0]), std::abs(s[1] - t[1]),
                         std::abs(s[2] - t[2])});
    EXPECT_EQ(path.voxels.size(), static_cast<std::size_t>(cheb) + 1)
        << "from " << s[0] << "," << s[1] << "," << s[2] << " to " << t[0]
        << "," << t[1] << "," << t[2];
    EXPECT_EQ(path.voxels.front(), s);
    EXPECT_EQ(path.voxels.back(), t);
    for (std::size_t i = 1; i < path.voxels.size(); ++i)
      for (int ax = 0; ax < 3; ++ax)
        EXPECT_LE(std::abs(path.voxels[i][ax] - path.voxels[i - 1][ax]), 1);
  };

  Volume flat({5, 5, 1}, {1, 1, 1}, {0, 0, 0}, 2.5f);
  check(flat, {0, 4, 0}, {4, 0, 0});  // anti-diagonal, not index order
  check(flat, {4, 0, 0}, {0, 4, 0});
  check(flat, {0, 0, 0}, {4, 4, 0});
  check(flat, {2, 3, 0}, {3, 0, 0});

  Volume cube({6, 7, 5}, {0.5, 0.5, 2.0}, {0, 0, 0}, 1.0f);
  check(cube, {0, 6, 4}, {5, 0, 0});
  check(cube, {5, 1, 0}, {0, 6, 4});
  check(cube, {1, 2, 3}, {4, 5, 0});

  Volume zeros({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  check(zeros, {3, 3, 3}, {0, 0, 0});
}

TEST(Trace, CostMatchesBellmanFordExactly) {
  // Independent oracle: round-based relaxation over all edges, no priority
  // queue. On continuous random maps the optimal path is unique, so both
  // algorithms add the same edge weights in the same order and the costs
  // agree bit for bit.
  auto oracle = [](const Volume& map, const VoxelIndex& s,
                   const VoxelIndex& t) {
    const auto& d = map.dims();
    float mx = 0.0f;
    for (float v : map.data()) mx = std::max(mx, v);
    auto cost = [&](int i, int j, int k) {
      return static_cast<double>(mx) - static_cast<double>(map.at(i, j, k));
    };
    const double sx = map.spacing()[0], sy = map.spacing()[1],
                 sz = map.spacing()[2];
    std::size_t n = map.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    dist[map.index(s[0], s[1], s[2])] = 0.0;
    for (std::size_t round = 0; round + 1 < n; ++round) {
      bool changed = false;
      for (int uk = 0; uk < d[2]; ++uk)
        for (int uj = 0; uj < d[1]; ++uj)
          for (int ui = 0; ui < d[0]; ++ui) {
            double du = dist[map.index(ui, uj, uk)];
            if (du == std::numeric_limits<double>::infinity()) continue;
            for (int dk = -1; dk <= 1; ++dk)
              for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                  if (!di && !dj && !dk) continue;
                  int vi = ui + di, vj = uj + dj, vk = uk + dk;
                  if (vi < 0 || vi >= d[0] || vj < 0 || vj >= d[1] ||
                      vk < 0 || vk >= d[2])
                    continue;
                  double step = std::sqrt(di * sx * di * sx +
                                          dj * sy * dj * sy +
                                          dk * sz * dk * sz);
                  double nd =
                      du + 0.5 * (cost(ui, uj, uk) + cost(vi, vj, vk)) * step;
                  std::size_t v = map.index(vi, vj, vk);
                  if (nd < dist[v]) {
                    dist[v] = nd;
                    changed = true;
                  }
                }
          }
      if (!changed) break;
    }
    return dist[map.index(t[0], t[1], t[2])];
  };

  Rng rng(70);
  for (int rep = 0; rep < 6; ++rep) {
    std::array<double, 3> spacing =
        rep % 2 ? std::array<double, 3>{0.7, 1.1, 0.4}
                : std::array<double, 3>{1.0, 1.0, 1.0};
    Volume map({5, 5, 5}, spacing, {0, 0, 0});
    for (auto& v : map.data()) v = static_cast<float>(rng.uniform01());
    VoxelIndex s = {0, static_cast<int>(rng.index(5)), 0};
    VoxelIndex t = {4, static_cast<int>(rng.index(5)), 4};

    CenterlinePath path = trace_centerline(map, s, t);
    double expected = oracle(map, s, t);
    EXPECT_EQ(path.cost, expected) << "rep " << rep;
    EXPECT_DOUBLE_EQ(path_cost(map, path), path.cost);
  }
}

TEST(Trace, SagittalFlipGivesMirroredPathAndEqualCost) {
  Rng rng(80);
  Volume map({7, 6, 5}, {0.5, 0.5, 1.0}, {0, 0, 0});
  for (auto& v : map.data()) v = static_cast<float>(rng.uniform01());
  Volume mirrored = flip_sagittal(map);

  VoxelIndex s = {0, 1, 0}, t = {6, 4, 4};
  VoxelIndex sm = {6, 1, 0}, tm = {0, 4, 4};
  CenterlinePath path = trace_centerline(map, s, t);
  CenterlinePath mpath = trace_centerline(mirrored, sm, tm);

  EXPECT_EQ(mpath.cost, path.cost);
  CenterlinePath flipped = flip_path_sagittal(path, map);
  ASSERT_EQ(flipped.voxels.size(), mpath.voxels.size());
  EXPECT_EQ(flipped.voxels, mpath.voxels);
  EXPECT_DOUBLE_EQ(path_cost(mirrored, flipped), path_cost(map, path));
}

TEST(Trace, DeterministicAcrossRunsIncludingPlateaus) {
  Volume map({8, 8, 4}, {1, 1, 1}, {0, 0, 0});
  for (int k = 0; k < 4; ++k)
    for (int j = 2; j < 6; ++j)
      for (int i = 2; i < 6; ++i) map.at(i, j, k) = 1.0f;  // flat ridge block

  CenterlinePath a = trace_centerline(map, {0, 0, 0}, {7, 7, 3});
  CenterlinePath b = trace_centerline(map, {0, 0, 0}, {7, 7, 3});
  EXPECT_EQ(a.voxels, b.voxels);
  EXPECT_EQ(a.cost, b.cost);
}

TEST(Trace, EndpointHandling) {
  Volume map({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  EXPECT_THROW(trace_centerline(map, {0, 0, 0}, {4, 0, 0}),
               std::invalid_argument);
  EXPECT_THROW(trace_centerline(map, {-1, 0, 0}, {1, 0, 0}),
               std::invalid_argument);

  CenterlinePath self = trace_centerline(map, {2, 1, 3}, {2, 1, 3});
  ASSERT_EQ(self.voxels.size(), 1u);
  EXPECT_EQ(self.voxels[0], (VoxelIndex{2, 1, 3}));
  EXPECT_EQ(self.cost, 0.0);
}

TEST(Waypoints, FirstAndLastSupportedSlicesAlwaysContribute) {
  Volume map({9, 9, 7}, {1, 1, 1}, {0, 0, 0});
  // Supported slices 1, 2 and 5, 6 with distinct peaks; 0, 3, 4 stay empty.
  map.at(2, 3, 1) = 5.0f;
  map.at(3, 3, 2) = 4.0f;
  map.at(4, 4, 5) = 2.0f;
  map.at(5, 4, 6) = 3.0f;

  // Stride larger than the stack: only the two extreme supported slices.
  std::vector<VoxelIndex> two = extract_waypoints(map, 50);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0], (VoxelIndex{2, 3, 1}));
  EXPECT_EQ(two[1], (VoxelIndex{5, 4, 6}));

  // Stride 2 visits slices 1, 3, 5 and the last; the empty slice 3 drops out.
  std::vector<VoxelIndex> wp = extract_waypoints(map, 2);
  ASSERT_EQ(wp.size(), 3u);
  EXPECT_EQ(wp[0], (VoxelIndex{2, 3, 1}));
  EXPECT_EQ(wp[1], (VoxelIndex{4, 4, 5}));
  EXPECT_EQ(wp[2], (VoxelIndex{5, 4, 6}));

  EXPECT_THROW(extract_waypoints(map, 0), std::invalid_argument);

  Volume empty({5, 5, 5}, {1, 1, 1}, {0, 0, 0});
  EXPECT_TRUE(extract_waypoints(empty, 1).empty());
  EXPECT_TRUE(trace_channel(empty, 1).voxels.empty());
}

TEST(Waypoints, ChannelTraceIsContinuousAcrossGaps) {
  Volume map({9, 9, 7}, {1, 1, 1}, {0, 0, 0});
  map.at(2, 3, 1) = 5.0f;
  map.at(3, 3, 2) = 4.0f;
  map.at(4, 4, 5) = 2.0f;
  map.at(5, 4, 6) = 3.0f;

  CenterlinePath path = trace_channel(map, 2);
  ASSERT_GE(path.voxels.size(), 2u);
  EXPECT_EQ(path.voxels.front(), (VoxelIndex{2, 3, 1}));
  EXPECT_EQ(path.voxels.back(), (VoxelIndex{5, 4, 6}));
  for (std::size_t i = 1; i < path.voxels.size(); ++i) {
    int step = 0;
    for (int ax = 0; ax < 3; ++ax)
      step = std::max(step,
                      std::abs(path.voxels[i][ax] - path.voxels[i - 1][ax]));
    EXPECT_EQ(step, 1) << "between " << i - 1 << " and " << i;
  }
  ASSERT_EQ(path.world_mm.size(), path.voxels.size());
  for (std::size_t i = 0; i < path.voxels.size(); ++i) {
    auto w = map.world_from_voxel(path.voxels[i][0], path.voxels[i][1],
                                  path.voxels[i][2]);
    EXPECT_EQ(path.world_mm[i].x, w.x);
    EXPECT_EQ(path.world_mm[i].y, w.y);
    EXPECT_EQ(path.world_mm[i].z, w.z);
  }
}

TEST(CenterlineIO, JsonRoundTripAndValidation) {
  Volume map({6, 6, 6}, {0.5, 0.5, 1.0}, {1, 2, 3}, 1.0f);
  CenterlinePath path = trace_centerline(map, {0, 0, 0}, {5, 5, 5});

  nlohmann::json j = centerline_to_json(path, ArteryClass::external_carotid);
  auto [back, channel] = centerline_from_json(j);
  EXPECT_EQ(channel, ArteryClass::external_carotid);
  EXPECT_EQ(back.voxels, path.voxels);
  EXPECT_EQ(centerline_to_json(back, channel).dump(), j.dump());

  namespace fs = std::filesystem;
  fs::path dir = fs::path(::testing::TempDir()) / "centerline_io";
  fs::create_directories(dir);
  std::string file = (dir / "line.centerline.json").string();
  save_centerline(path, ArteryClass::internal_carotid, file);
  auto [loaded, loaded_channel] = load_centerline(file);
  EXPECT_EQ(loaded_channel, ArteryClass::internal_carotid);
  EXPECT_EQ(loaded.voxels, path.voxels);

  nlohmann::json bad = j;
  bad["version"] = 9;
  EXPECT_THROW(centerline_from_json(bad), std::runtime_error);
  bad = j;
  bad.erase("version");
  EXPECT_THROW(centerline_from_json(bad), std::runtime_error);
  bad = j;
  bad["world_mm"].erase(0);
  EXPECT_THROW(centerline_from_json(bad), std::runtime_error);
  bad = j;
  bad["channel"] = "sideways";
  EXPECT_THROW(centerline_from_json(bad), std::runtime_error);
}

}  // namespace
}  // namespace polarring
