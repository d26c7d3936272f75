#pragma once

// 3D scalar volumes on a regular grid with world-coordinate mapping,
// percentile intensity normalization, trilinear sampling and sagittal
// mirroring. Voxel data is stored row-major with x fastest, matching the
// on-disk raw format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace polarring {

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

class Volume {
 public:
  Volume() = default;
  Volume(std::array<int, 3> dims, std::array<double, 3> spacing_mm,
         std::array<double, 3> origin_mm, float fill = 0.0f)
      : dims_(dims), spacing_(spacing_mm), origin_(origin_mm) {
    if (dims_[0] < 1 || dims_[1] < 1 || dims_[2] < 1)
      throw std::invalid_argument("volume dims must all be >= 1");
    if (spacing_[0] <= 0.0 || spacing_[1] <= 0.0 || spacing_[2] <= 0.0)
      throw std::invalid_argument("voxel spacing must be > 0");
    data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2],
                 fill);
  }

  const std::array<int, 3>& dims() const { return dims_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  const std::array<double, 3>& origin() const { return origin_; }
  std::size_t size() const { return data_.size(); }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) +
                static_cast<std::size_t>(dims_[1]) * k);
  }

  float at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  float& at(int i, int j, int k) { return data_[index(i, j, k)]; }

  WorldPoint world_from_voxel(double i, double j, double k) const {
    return {origin_[0] + i * spacing_[0], origin_[1] + j * spacing_[1],
            origin_[2] + k * spacing_[2]};
  }

  // Continuous voxel coordinates; voxel centers sit at integer values.
  std::array<double, 3> voxel_from_world(const WorldPoint& p) const {
    return {(p.x - origin_[0]) / spacing_[0], (p.y - origin_[1]) / spacing_[1],
            (p.z - origin_[2]) / spacing_[2]};
  }

  int slice_of(const WorldPoint& p) const {
    return static_cast<int>(std::lround((p.z - origin_[2]) / spacing_[2]));
  }

 private:
  std::array<int, 3> dims_ = {1, 1, 1};
  std::array<double, 3> spacing_ = {1.0, 1.0, 1.0};
  std::array<double, 3> origin_ = {0.0, 0.0, 0.0};
  std::vector<float> data_ = {0.0f};
};

// Order statistic with linear interpolation between closest ranks,
// q in [0, 100]. The input need not be sorted.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  std::sort(values.begin(), values.end());
  double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

struct NormalizeResult {
  Volume volume;
  bool degenerate = false;  // constant input, output forced to all zeros
};

// Rescales so the 5th percentile maps to 0 and the 95th to 1, clamped to
// [0, 1]. A constant image cannot be rescaled and comes back as zeros with
// the degenerate flag set instead of an error, so batch runs keep going.
inline NormalizeResult normalize_intensity(const Volume& vol) {
  std::vector<double> values(vol.data().begin(), vol.data().end());
  double p5 = percentile(values, 5.0);
  double p95 = percentile(values, 95.0);

  NormalizeResult out;
  out.volume = Volume(vol.dims(), vol.spacing(), vol.origin());
  if (p95 == p5) {
    out.degenerate = true;
    return out;
  }
  double scale = 1.0 / (p95 - p5);
  for (std::size_t n = 0; n < vol.size(); ++n) {
    double v = (static_cast<double>(vol.data()[n]) - p5) * scale;
    out.volume.data()[n] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

inline bool inside_voxel_bounds(const Volume& vol, const WorldPoint& p) {
  auto u = vol.voxel_from_world(p);
  for (int ax = 0; ax < 3; ++ax) {
    if (u[ax] < 0.0 || u[ax] > static_cast<double>(vol.dims()[ax] - 1))
      return false;
  }
  return true;
}

// Trilinear interpolation of the 8 surrounding voxels. Points outside the
// voxel-center bounding box read as 0, which matches the dark background
// and makes rays safe near the borders.
inline double sample_trilinear(const Volume& vol, const WorldPoint& p) {
  auto u = vol.voxel_from_world(p);
  const auto& d = vol.dims();
  for (int ax = 0; ax < 3; ++ax) {
    if (u[ax] < 0.0 || u[ax] > static_cast<double>(d[ax] - 1)) return 0.0;
  }
  int i0 = std::min(static_cast<int>(u[0]), d[0] - 1);
  int j0 = std::min(static_cast<int>(u[1]), d[1] - 1);
  int k0 = std::min(static_cast<int>(u[2]), d[2] - 1);
  int i1 = std::min(i0 + 1, d[0] - 1);
  int j1 = std::min(j0 + 1, d[1] - 1);
  int k1 = std::min(k0 + 1, d[2] - 1);
  double fx = u[0] - i0;
  double fy = u[1] - j0;
  double fz = u[2] - k0;

  auto v = [&](int i, int j, int k) {
    return static_cast<double>(vol.at(i, j, k));
  };
  double c00 = v(i0, j0, k0) * (1.0 - fx) + v(i1, j0, k0) * fx;
  double c10 = v(i0, j1, k0) * (1.0 - fx) + v(i1, j1, k0) * fx;
  double c01 = v(i0, j0, k1) * (1.0 - fx) + v(i1, j0, k1) * fx;
  double c11 = v(i0, j1, k1) * (1.0 - fx) + v(i1, j1, k1) * fx;
  double c0 = c00 * (1.0 - fy) + c10 * fy;
  double c1 = c01 * (1.0 - fy) + c11 * fy;
  return c0 * (1.0 - fz) + c1 * fz;
}

// Mirror across the mid-sagittal plane: voxel (i,j,k) -> (m-1-i,j,k).
inline Volume flip_sagittal(const Volume& vol) {
  Volume out(vol.dims(), vol.spacing(), vol.origin());
  const auto& d = vol.dims();
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i)
        out.at(d[0] - 1 - i, j, k) = vol.at(i, j, k);
  return out;
}

// ---------------------------------------------------------------------------
// File format: <base>.vol.json sidecar + <base>.vol.raw of f32 little-endian
// values, x fastest.

namespace detail {
inline std::string vol_base(const std::string& path) {
  std::string base = path;
  if (base.size() >= 5 && base.substr(base.size() - 5) == ".json")
    base = base.substr(0, base.size() - 5);
  if (base.size() >= 4 && base.substr(base.size() - 4) == ".raw")
    base = base.substr(0, base.size() - 4);
  if (base.size() < 4 || base.substr(base.size() - 4) != ".vol")
    base += ".vol";
  return base;
}
}  // namespace detail

inline void save_volume(const Volume& vol, const std::string& path) {
  static_assert(sizeof(float) == 4);
  std::string base = detail::vol_base(path);

  nlohmann::json j;
  j["dims"] = vol.dims();
  j["spacing_mm"] = vol.spacing();
  j["origin_mm"] = vol.origin();
  j["dtype"] = "f32le";
  std::ofstream meta(base + ".json");
  if (!meta) throw std::runtime_error("cannot write " + base + ".json");
  meta << j.dump(2) << "\n";

  std::ofstream raw(base + ".raw", std::ios::binary);
  if (!raw) throw std::runtime_error("cannot write " + base + ".raw");
  raw.write(reinterpret_cast<const char*>(vol.data().data()),
            static_cast<std::streamsize>(vol.size() * sizeof(float)));
  if (!raw) throw std::runtime_error("short write to " + base + ".raw");
}

inline Volume load_volume(const std::string& path) {
  std::string base = detail::vol_base(path);
  std::ifstream meta(base + ".json");
  if (!meta) throw std::runtime_error("cannot read " + base + ".json");
  nlohmann::json j = nlohmann::json::parse(meta);
  if (j.at("dtype").get<std::string>() != "f32le")
    throw std::runtime_error("unsupported dtype in " + base + ".json");

  Volume vol(j.at("dims").get<std::array<int, 3>>(),
             j.at("spacing_mm").get<std::array<double, 3>>(),
             j.at("origin_mm").get<std::array<double, 3>>());
  std::ifstream raw(base + ".raw", std::ios::binary);
  if (!raw) throw std::runtime_error("cannot read " + base + ".raw");
  raw.read(reinterpret_cast<char*>(vol.data().data()),
           static_cast<std::streamsize>(vol.size() * sizeof(float)));
  if (static_cast<std::size_t>(raw.gcount()) != vol.size() * sizeof(float))
    throw std::runtime_error("short read from " + base + ".raw");
  return vol;
}

}  // namespace polarring
