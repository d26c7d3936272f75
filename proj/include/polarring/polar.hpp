#pragma once

// Cartesian-to-polar resampling by ray casting around a center point.
// The angle axis is circularly extended with half the rays on each side
// ((2N-1) rows total), which turns valid convolutions downstream into
// circular ones and makes the network rotation-equivariant.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "polarring/contour.hpp"
#include "polarring/geometry.hpp"
#include "polarring/rng.hpp"
#include "polarring/volume.hpp"

namespace polarring {

struct PolarGrid {
  int n_angles = 31;             // N equidistant angles
  int n_samples = 127;           // R samples per ray, sample 0 at the center
  double ray_spacing_mm = 0.25;  // radial step

  double angle(int i) const { return 2.0 * kPi * i / n_angles; }
  int padded_rows() const { return 2 * n_angles - 1; }
  int half() const { return n_angles / 2; }

  // Canonical ray index supplying a padded row: the leading floor(N/2) rows
  // repeat the last rays, the trailing ones repeat the first rays.
  int row_source(int padded_row) const {
    return (padded_row + n_angles - half()) % n_angles;
  }

  void validate() const {
    if (n_angles < 4) throw std::invalid_argument("need at least 4 angles");
    if (n_samples < 2) throw std::invalid_argument("need at least 2 samples");
    if (!(ray_spacing_mm > 0.0))
      throw std::invalid_argument("ray spacing must be > 0");
  }

  bool operator==(const PolarGrid&) const = default;
};

// (2N-1) x R x S intensity grid. Slices are ordered by ascending axial
// offset; S = 1 for single-slice images. Layout is (slice, row, radius)
// with radius fastest.
struct PolarImage {
  PolarGrid grid;
  WorldPoint center;
  int slice = 0;
  int n_slices = 1;
  std::vector<double> data;

  double at(int row, int r, int s = 0) const {
    return data[(static_cast<std::size_t>(s) * grid.padded_rows() + row) *
                    grid.n_samples +
                r];
  }
  double& at(int row, int r, int s = 0) {
    return data[(static_cast<std::size_t>(s) * grid.padded_rows() + row) *
                    grid.n_samples +
                r];
  }
};

namespace detail {

// One polar plane at the given z, no center validation (stack planes may
// leave the volume and then sample as 0).
inline void cast_plane(const Volume& vol, const WorldPoint& center,
                       const PolarGrid& grid, double z, PolarImage& img,
                       int s) {
  const int n = grid.n_angles;
  const int rows = grid.padded_rows();
  std::vector<double> canonical(static_cast<std::size_t>(n) * grid.n_samples);
  for (int i = 0; i < n; ++i) {
    double c = std::cos(grid.angle(i));
    double sn = std::sin(grid.angle(i));
    for (int r = 0; r < grid.n_samples; ++r) {
      double d = r * grid.ray_spacing_mm;
      canonical[static_cast<std::size_t>(i) * grid.n_samples + r] =
          sample_trilinear(vol, {center.x + d * c, center.y + d * sn, z});
    }
  }
  for (int row = 0; row < rows; ++row) {
    const double* src =
        &canonical[static_cast<std::size_t>(grid.row_source(row)) *
                   grid.n_samples];
    for (int r = 0; r < grid.n_samples; ++r) img.at(row, r, s) = src[r];
  }
}

}  // namespace detail

inline PolarImage cast_polar(const Volume& vol, const WorldPoint& center,
                             const PolarGrid& grid) {
  grid.validate();
  if (!inside_voxel_bounds(vol, center))
    throw std::invalid_argument("polar center lies outside the volume");
  PolarImage img;
  img.grid = grid;
  img.center = center;
  img.slice = vol.slice_of(center);
  img.n_slices = 1;
  img.data.assign(
      static_cast<std::size_t>(grid.padded_rows()) * grid.n_samples, 0.0);
  detail::cast_plane(vol, center, grid, center.z, img, 0);
  return img;
}

// Stack of 2k+1 polar planes at axial offsets -k..+k voxels, all sharing
// the in-plane center. Planes beyond the volume read as 0.
inline PolarImage cast_polar_stack(const Volume& vol, const WorldPoint& center,
                                   const PolarGrid& grid, int k) {
  grid.validate();
  if (k < 0) throw std::invalid_argument("slice context k must be >= 0");
  if (!inside_voxel_bounds(vol, center))
    throw std::invalid_argument("polar center lies outside the volume");
  PolarImage img;
  img.grid = grid;
  img.center = center;
  img.slice = vol.slice_of(center);
  img.n_slices = 2 * k + 1;
  img.data.assign(static_cast<std::size_t>(img.n_slices) *
                      grid.padded_rows() * grid.n_samples,
                  0.0);
  for (int off = -k; off <= k; ++off) {
    double z = center.z + off * vol.spacing()[2];
    detail::cast_plane(vol, center, grid, z, img, off + k);
  }
  return img;
}

// Training augmentation: displace the polar origin uniformly within an
// axial disk, emulating imperfect centerline localization.
inline WorldPoint jitter_center(const WorldPoint& center, double max_radius_mm,
                                Rng& rng) {
  if (max_radius_mm < 0.0)
    throw std::invalid_argument("jitter radius must be >= 0");
  auto off = rng.in_disk(max_radius_mm);
  return {center.x + off[0], center.y + off[1], center.z};
}

inline WorldPoint jitter_center(const WorldPoint& center, double max_radius_mm,
                                std::uint64_t seed) {
  Rng rng(seed);
  return jitter_center(center, max_radius_mm, rng);
}

// Polar image as a saveable volume with dims (2N-1, R, S); the in-plane
// spacings are the ray spacing, the slice axis keeps unit spacing.
inline Volume polar_to_volume(const PolarImage& img) {
  Volume vol({img.grid.padded_rows(), img.grid.n_samples, img.n_slices},
             {img.grid.ray_spacing_mm, img.grid.ray_spacing_mm, 1.0},
             {0.0, 0.0, 0.0});
  for (int s = 0; s < img.n_slices; ++s)
    for (int row = 0; row < img.grid.padded_rows(); ++row)
      for (int r = 0; r < img.grid.n_samples; ++r)
        vol.at(row, r, s) = static_cast<float>(img.at(row, r, s));
  return vol;
}

struct RadiiTargets {
  std::vector<double> lumen;  // mm, per grid angle
  std::vector<double> outer;  // mm, per grid angle
};

// Regression targets for an arbitrary polar origin: the distance from the
// center to the first crossing of each grid ray with the ground-truth
// contours. The center must lie strictly inside the lumen, otherwise the
// targets are undefined.
inline RadiiTargets radii_from_truth(const ContourPair& truth,
                                     const WorldPoint& center,
                                     const PolarGrid& grid) {
  grid.validate();
  ContourPolygons polys = to_polygons(truth);
  Vec2 origin{center.x, center.y};
  if (!point_in_polygon(polys.lumen, origin))
    throw std::invalid_argument(
        "radii_from_truth: center is not inside the lumen contour");

  RadiiTargets out;
  out.lumen.resize(grid.n_angles);
  out.outer.resize(grid.n_angles);
  for (int i = 0; i < grid.n_angles; ++i) {
    Vec2 dir{std::cos(grid.angle(i)), std::sin(grid.angle(i))};
    auto t_lumen = ray_polygon_first_hit(polys.lumen, origin, dir);
    auto t_outer = ray_polygon_first_hit(polys.outer, origin, dir);
    if (!t_lumen || !t_outer)
      throw std::runtime_error("radii_from_truth: ray missed the contour");
    out.lumen[i] = *t_lumen;
    out.outer[i] = *t_outer;
  }
  return out;
}

}  // namespace polarring
