#pragma once

// Step one of the pipeline: centerline proximity fields and shortest-path
// tracing. The proximity value decays exponentially with distance to the
// centerline and is zero beyond a cutoff radius; Dijkstra then runs on the
// inverted field, so a continuous path between the end slices is always
// found.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polarring/json_util.hpp"
#include "polarring/phantom.hpp"
#include "polarring/rng.hpp"
#include "polarring/volume.hpp"

namespace polarring {

struct ProximityParams {
  double a = 6.0;      // decay control
  double d_m_mm = 5.0; // support radius: the field is 0 at and beyond this
};

// Proximity f(D) = exp(a * (1 - D / d_m)) - 1 for D < d_m, else 0; maximal
// on the centerline, strictly decreasing with distance.
inline double proximity_value(double dist_mm, const ProximityParams& p) {
  if (dist_mm >= p.d_m_mm) return 0.0;
  return std::exp(p.a * (1.0 - dist_mm / p.d_m_mm)) - 1.0;
}

using Polyline = std::vector<WorldPoint>;

// Two-channel field (internal and external carotid) plus the polylines it
// was built from, kept so degradation can rebuild from a perturbed source.
struct ProximityMap {
  Volume internal_map;
  Volume external_map;
  std::vector<Polyline> internal_lines;
  std::vector<Polyline> external_lines;
  ProximityParams params;

  const Volume& channel(ArteryClass c) const {
    return c == ArteryClass::internal_carotid ? internal_map : external_map;
  }
  Volume& channel(ArteryClass c) {
    return c == ArteryClass::internal_carotid ? internal_map : external_map;
  }
  const std::vector<Polyline>& lines(ArteryClass c) const {
    return c == ArteryClass::internal_carotid ? internal_lines
                                              : external_lines;
  }
};

namespace detail {

inline double point_segment_dist(const WorldPoint& p, const WorldPoint& a,
                                 const WorldPoint& b) {
  double ex = b.x - a.x, ey = b.y - a.y, ez = b.z - a.z;
  double len2 = ex * ex + ey * ey + ez * ez;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.x - a.x) * ex + (p.y - a.y) * ey + (p.z - a.z) * ez) / len2;
    t = std::min(1.0, std::max(0.0, t));
  }
  double dx = p.x - (a.x + t * ex);
  double dy = p.y - (a.y + t * ey);
  double dz = p.z - (a.z + t * ez);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Distance from a point to the nearest vertex-interpolated polyline point.
// Segments whose z-range is further than the cutoff cannot matter, which
// prunes most of the polyline for axial stacks.
inline double polyline_distance(const WorldPoint& p,
                                const std::vector<Polyline>& lines,
                                double cutoff) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : lines) {
    if (line.empty()) continue;
    if (line.size() == 1) {
      double dx = p.x - line[0].x, dy = p.y - line[0].y, dz = p.z - line[0].z;
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      continue;
    }
    for (std::size_t s = 0; s + 1 < line.size(); ++s) {
      double z_lo = std::min(line[s].z, line[s + 1].z);
      double z_hi = std::max(line[s].z, line[s + 1].z);
      if (p.z < z_lo - cutoff || p.z > z_hi + cutoff) continue;
      best = std::min(best, point_segment_dist(p, line[s], line[s + 1]));
      if (best == 0.0) return 0.0;
    }
  }
  return best;
}

inline Volume build_channel(const std::array<int, 3>& dims,
                            const std::array<double, 3>& spacing,
                            const std::array<double, 3>& origin,
                            const std::vector<Polyline>& lines,
                            const ProximityParams& params) {
  Volume map(dims, spacing, origin);
  if (lines.empty()) return map;
  for (int k = 0; k < dims[2]; ++k) {
    double z = origin[2] + k * spacing[2];
    for (int j = 0; j < dims[1]; ++j) {
      double y = origin[1] + j * spacing[1];
      for (int i = 0; i < dims[0]; ++i) {
        double x = origin[0] + i * spacing[0];
        double d = polyline_distance({x, y, z}, lines, params.d_m_mm);
        map.at(i, j, k) = static_cast<float>(proximity_value(d, params));
      }
    }
  }
  return map;
}

}  // namespace detail

// Analytic proximity field from phantom ground truth, replacing the learned
// cost-map predictor. One channel per artery class.
inline ProximityMap proximity_map(const PhantomTruth& truth,
                                  const ProximityParams& params = {}) {
  if (!(params.a > 0.0) || !(params.d_m_mm > 0.0))
    throw std::invalid_argument("proximity params must be > 0");
  ProximityMap out;
  out.params = params;
  for (const auto& vessel : truth.vessels) {
    auto& lines = vessel.label == ArteryClass::internal_carotid
                      ? out.internal_lines
                      : out.external_lines;
    lines.push_back(vessel.centerline);
  }
  out.internal_map = detail::build_channel(truth.dims, truth.spacing_mm,
                                           truth.origin_mm,
                                           out.internal_lines, params);
  out.external_map = detail::build_channel(truth.dims, truth.spacing_mm,
                                           truth.origin_mm,
                                           out.external_lines, params);
  return out;
}

struct DegradeConfig {
  double sigma_add = 0.0;     // additive Gaussian noise, map units
  double dropout_prob = 0.0;  // per-slice chance of zeroing a blob at the peak
  double wobble_mm = 0.0;     // rebuild from a laterally perturbed centerline

  void validate() const {
    if (sigma_add < 0.0 || dropout_prob < 0.0 || dropout_prob > 1.0 ||
        wobble_mm < 0.0)
      throw std::invalid_argument("degrade parameters out of range");
  }
};

namespace detail {

inline void wobble_lines(std::vector<Polyline>& lines, double amp_mm,
                         Rng& rng) {
  for (auto& line : lines) {
    if (line.empty()) continue;
    // Bounded smooth lateral offset: the x/y amplitudes sit on a circle of
    // radius amp so the Euclidean displacement never exceeds amp.
    double beta = rng.uniform(0.0, 2.0 * kPi);
    double ax = amp_mm * std::cos(beta);
    double ay = amp_mm * std::sin(beta);
    double phase_x = rng.uniform(0.0, 2.0 * kPi);
    double phase_y = rng.uniform(0.0, 2.0 * kPi);
    double z0 = line.front().z;
    double span = std::max(1.0, std::abs(line.back().z - z0));
    double period = std::max(4.0, span / 2.0);
    for (auto& p : line) {
      double t = 2.0 * kPi * (p.z - z0) / period;
      p.x += ax * std::sin(t + phase_x);
      p.y += ay * std::sin(t + phase_y);
    }
  }
}

inline void drop_blobs(Volume& map, double prob, double radius_mm, Rng& rng) {
  const auto& d = map.dims();
  for (int k = 0; k < d[2]; ++k) {
    if (rng.uniform01() >= prob) continue;
    // Zero a sphere around this slice's peak, where a predictor failure
    // hurts the most.
    int bi = 0, bj = 0;
    float best = -1.0f;
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        if (map.at(i, j, k) > best) {
          best = map.at(i, j, k);
          bi = i;
          bj = j;
        }
    if (best <= 0.0f) continue;
    WorldPoint c = map.world_from_voxel(bi, bj, k);
    int ri = static_cast<int>(std::ceil(radius_mm / map.spacing()[0]));
    int rj = static_cast<int>(std::ceil(radius_mm / map.spacing()[1]));
    int rk = static_cast<int>(std::ceil(radius_mm / map.spacing()[2]));
    for (int kk = std::max(0, k - rk); kk <= std::min(d[2] - 1, k + rk); ++kk)
      for (int jj = std::max(0, bj - rj); jj <= std::min(d[1] - 1, bj + rj);
           ++jj)
        for (int ii = std::max(0, bi - ri); ii <= std::min(d[0] - 1, bi + ri);
             ++ii) {
          WorldPoint p = map.world_from_voxel(ii, jj, kk);
          double dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
          if (dx * dx + dy * dy + dz * dz <= radius_mm * radius_mm)
            map.at(ii, jj, kk) = 0.0f;
        }
  }
}

}  // namespace detail

// Emulates an imperfect learned proximity predictor: lateral centerline
// wobble (map rebuilt), zeroed blobs, additive noise clipped at zero.
// Deterministic per seed; all-zero noise returns the input unchanged.
inline ProximityMap degrade_map(const ProximityMap& map,
                                const DegradeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ProximityMap out = map;
  if (cfg.wobble_mm > 0.0) {
    if (map.internal_lines.empty() && map.external_lines.empty())
      throw std::invalid_argument(
          "wobble needs the source centerlines, which this map does not carry");
    Rng rng(derive_seed(seed, "degrade.wobble"));
    detail::wobble_lines(out.internal_lines, cfg.wobble_mm, rng);
    detail::wobble_lines(out.external_lines, cfg.wobble_mm, rng);
    out.internal_map = detail::build_channel(
        map.internal_map.dims(), map.internal_map.spacing(),
        map.internal_map.origin(), out.internal_lines, map.params);
    out.external_map = detail::build_channel(
        map.external_map.dims(), map.external_map.spacing(),
        map.external_map.origin(), out.external_lines, map.params);
  }
  if (cfg.dropout_prob > 0.0) {
    Rng rng(derive_seed(seed, "degrade.dropout"));
    detail::drop_blobs(out.internal_map, cfg.dropout_prob,
                       0.5 * map.params.d_m_mm, rng);
    detail::drop_blobs(out.external_map, cfg.dropout_prob,
                       0.5 * map.params.d_m_mm, rng);
  }
  if (cfg.sigma_add > 0.0) {
    Rng rng(derive_seed(seed, "degrade.noise"));
    for (Volume* v : {&out.internal_map, &out.external_map})
      for (std::size_t n = 0; n < v->size(); ++n) {
        double x = v->data()[n] + rng.normal(0.0, cfg.sigma_add);
        v->data()[n] = static_cast<float>(std::max(0.0, x));
      }
  }
  return out;
}

using VoxelIndex = std::array<int, 3>;

struct CenterlinePath {
  std::vector<VoxelIndex> voxels;
  std::vector<WorldPoint> world_mm;
  double cost = 0.0;  // accumulated Dijkstra edge cost
};

namespace detail {

// Edge weight between neighboring voxels: mean node cost times the
// Euclidean step length in mm.
inline double edge_weight(double cost_u, double cost_v, double step_mm) {
  return 0.5 * (cost_u + cost_v) * step_mm;
}

}  // namespace detail

// Minimum-cost path between two voxels under node costs max(f) - f over
// 26-connectivity. Equal-cost ties prefer fewer steps and then the smaller
// predecessor index, so plateaus (a uniform field costs nothing everywhere)
// yield grid geodesics and repeated runs return the same path bit for bit.
inline CenterlinePath trace_centerline(const Volume& map,
                                       const VoxelIndex& start,
                                       const VoxelIndex& end) {
  const auto& d = map.dims();
  auto in_range = [&](const VoxelIndex& v) {
    return v[0] >= 0 && v[0] < d[0] && v[1] >= 0 && v[1] < d[1] && v[2] >= 0 &&
           v[2] < d[2];
  };
  if (!in_range(start) || !in_range(end))
    throw std::invalid_argument("trace endpoints outside the map");

  float max_f = 0.0f;
  for (float v : map.data()) max_f = std::max(max_f, v);
  auto node_cost = [&](std::size_t idx) {
    return static_cast<double>(max_f) - static_cast<double>(map.data()[idx]);
  };

  const std::size_t n = map.size();
  auto flat = [&](const VoxelIndex& v) {
    return map.index(v[0], v[1], v[2]);
  };
  std::size_t s = flat(start);
  std::size_t t = flat(end);

  CenterlinePath path;
  if (s == t) {
    path.voxels.push_back(start);
    path.world_mm.push_back(map.world_from_voxel(start[0], start[1], start[2]));
    return path;
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<std::int32_t> hops(n, std::numeric_limits<std::int32_t>::max());
  std::vector<std::int64_t> pred(n, -1);
  std::vector<std::uint8_t> done(n, 0);

  using QueueItem = std::tuple<double, std::int32_t, std::size_t>;
  std::priority_queue<QueueItem, std::vector<QueueItem>,
                      std::greater<QueueItem>>
      queue;
  dist[s] = 0.0;
  hops[s] = 0;
  queue.push({0.0, 0, s});

  const double sx = map.spacing()[0], sy = map.spacing()[1],
               sz = map.spacing()[2];
  while (!queue.empty()) {
    auto [du, hu, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == t) break;
    int ui = static_cast<int>(u % d[0]);
    int uj = static_cast<int>((u / d[0]) % d[1]);
    int uk = static_cast<int>(u / (static_cast<std::size_t>(d[0]) * d[1]));
    double cu = node_cost(u);
    for (int dk = -1; dk <= 1; ++dk) {
      int vk = uk + dk;
      if (vk < 0 || vk >= d[2]) continue;
      for (int dj = -1; dj <= 1; ++dj) {
        int vj = uj + dj;
        if (vj < 0 || vj >= d[1]) continue;
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          int vi = ui + di;
          if (vi < 0 || vi >= d[0]) continue;
          std::size_t v = map.index(vi, vj, vk);
          if (done[v]) continue;
          double step = std::sqrt(di * sx * di * sx + dj * sy * dj * sy +
                                  dk * sz * dk * sz);
          double nd = du + detail::edge_weight(cu, node_cost(v), step);
          std::int32_t nh = hu + 1;
          bool better =
              nd < dist[v] ||
              (nd == dist[v] &&
               (nh < hops[v] ||
                (nh == hops[v] && static_cast<std::int64_t>(u) < pred[v])));
          if (better) {
            dist[v] = nd;
            hops[v] = nh;
            pred[v] = static_cast<std::int64_t>(u);
            queue.push({nd, nh, v});
          }
        }
      }
    }
  }

  if (pred[t] < 0 && t != s)
    throw std::runtime_error("trace failed to reach the end voxel");

  std::vector<std::size_t> rev;
  for (std::size_t cur = t;; cur = static_cast<std::size_t>(pred[cur])) {
    rev.push_back(cur);
    if (cur == s) break;
  }
  path.cost = dist[t];
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
    std::size_t idx = *it;
    int i = static_cast<int>(idx % d[0]);
    int j = static_cast<int>((idx / d[0]) % d[1]);
    int k = static_cast<int>(idx / (static_cast<std::size_t>(d[0]) * d[1]));
    path.voxels.push_back({i, j, k});
    path.world_mm.push_back(map.world_from_voxel(i, j, k));
  }
  return path;
}

// Recomputes the edge-cost sum of a path on a given map; used to compare
// traced paths across symmetric maps.
inline double path_cost(const Volume& map, const CenterlinePath& path) {
  float max_f = 0.0f;
  for (float v : map.data()) max_f = std::max(max_f, v);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.voxels.size(); ++i) {
    const auto& a = path.voxels[i];
    const auto& b = path.voxels[i + 1];
    double dx = (b[0] - a[0]) * map.spacing()[0];
    double dy = (b[1] - a[1]) * map.spacing()[1];
    double dz = (b[2] - a[2]) * map.spacing()[2];
    double ca = static_cast<double>(max_f) -
                static_cast<double>(map.at(a[0], a[1], a[2]));
    double cb = static_cast<double>(max_f) -
                static_cast<double>(map.at(b[0], b[1], b[2]));
    total += detail::edge_weight(ca, cb, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return total;
}

// Per-slice peaks used as start/end/way points: the first and last slices
// with any support always contribute, plus every stride-th slice between
// them. Slices whose map is all zero are skipped.
inline std::vector<VoxelIndex> extract_waypoints(const Volume& map,
                                                 int stride) {
  if (stride < 1) throw std::invalid_argument("waypoint stride must be >= 1");
  const auto& d = map.dims();

  auto slice_peak = [&](int k) -> std::optional<VoxelIndex> {
    float best = 0.0f;
    VoxelIndex arg{0, 0, k};
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        if (map.at(i, j, k) > best) {
          best = map.at(i, j, k);
          arg = {i, j, k};
        }
    if (best <= 0.0f) return std::nullopt;
    return arg;
  };

  int k_first = -1, k_last = -1;
  for (int k = 0; k < d[2]; ++k) {
    if (slice_peak(k)) {
      if (k_first < 0) k_first = k;
      k_last = k;
    }
  }
  std::vector<VoxelIndex> waypoints;
  if (k_first < 0) return waypoints;

  for (int k = k_first; k < k_last; k += stride) {
    if (auto p = slice_peak(k)) waypoints.push_back(*p);
  }
  if (auto p = slice_peak(k_last)) waypoints.push_back(*p);
  return waypoints;
}

// Full channel trace: Dijkstra segments between consecutive waypoints,
// concatenated with duplicate joints removed. Continuity of the result is
// guaranteed because every segment is grid-connected.
inline CenterlinePath trace_channel(const Volume& map, int stride) {
  std::vector<VoxelIndex> waypoints = extract_waypoints(map, stride);
  CenterlinePath path;
  if (waypoints.empty()) return path;
  if (waypoints.size() == 1) {
    const auto& w = waypoints[0];
    path.voxels.push_back(w);
    path.world_mm.push_back(map.world_from_voxel(w[0], w[1], w[2]));
    return path;
  }
  for (std::size_t s = 0; s + 1 < waypoints.size(); ++s) {
    CenterlinePath seg = trace_centerline(map, waypoints[s], waypoints[s + 1]);
    std::size_t skip = s == 0 ? 0 : 1;  // joint vertex already present
    for (std::size_t i = skip; i < seg.voxels.size(); ++i) {
      path.voxels.push_back(seg.voxels[i]);
      path.world_mm.push_back(seg.world_mm[i]);
    }
    path.cost += seg.cost;
  }
  return path;
}

// Mirror of flip_sagittal for traced paths.
inline CenterlinePath flip_path_sagittal(const CenterlinePath& path,
                                         const Volume& map) {
  CenterlinePath out = path;
  int m = map.dims()[0];
  for (std::size_t i = 0; i < out.voxels.size(); ++i) {
    out.voxels[i][0] = m - 1 - out.voxels[i][0];
    auto w = map.world_from_voxel(out.voxels[i][0], out.voxels[i][1],
                                  out.voxels[i][2]);
    out.world_mm[i] = w;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: {channel, voxels, world_mm}

inline nlohmann::json centerline_to_json(const CenterlinePath& path,
                                         ArteryClass channel) {
  nlohmann::json j;
  j["version"] = 1;
  j["channel"] = artery_name(channel);
  auto voxels = nlohmann::json::array();
  for (const auto& v : path.voxels) voxels.push_back({v[0], v[1], v[2]});
  j["voxels"] = std::move(voxels);
  auto world = nlohmann::json::array();
  for (const auto& p : path.world_mm) world.push_back({p.x, p.y, p.z});
  j["world_mm"] = std::move(world);
  return j;
}

inline std::pair<CenterlinePath, ArteryClass> centerline_from_json(
    const nlohmann::json& j) {
  check_version(j, "centerline file");
  CenterlinePath path;
  ArteryClass channel = artery_from_name(j.at("channel").get<std::string>());
  for (const auto& v : j.at("voxels"))
    path.voxels.push_back(
        {v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<int>()});
  for (const auto& p : j.at("world_mm"))
    path.world_mm.push_back(
        {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  if (path.voxels.size() != path.world_mm.size())
    throw std::runtime_error("centerline file: voxel/world size mismatch");
  return {std::move(path), channel};
}

inline void save_centerline(const CenterlinePath& path, ArteryClass channel,
                            const std::string& file) {
  std::ofstream f(file);
  if (!f) throw std::runtime_error("cannot write " + file);
  f << centerline_to_json(path, channel).dump(2) << "\n";
}

inline std::pair<CenterlinePath, ArteryClass> load_centerline(
    const std::string& file) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot read " + file);
  return centerline_from_json(nlohmann::json::parse(f));
}

}  // namespace polarring
