#pragma once

// Nested two-contour representation: lumen radii plus per-angle wall
// thickness, so the outer contour is lumen + thickness and the pair can
// never intersect. Conversion to polygons, sub-voxel rasterization to
// slice masks, and the ring-shaped wall mask live here too.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polarring/geometry.hpp"
#include "polarring/volume.hpp"

namespace polarring {

struct ContourPair {
  WorldPoint center;                 // polar origin, world mm
  int slice = 0;                     // axial slice index
  std::vector<double> angles_rad;    // N equidistant angles
  std::vector<double> lumen_radii;   // mm, > 0
  std::vector<double> thickness;     // mm, >= 0

  std::size_t n_angles() const { return angles_rad.size(); }
  double outer_radius(std::size_t i) const {
    return lumen_radii[i] + thickness[i];
  }

  void validate() const {
    if (angles_rad.empty() || lumen_radii.size() != angles_rad.size() ||
        thickness.size() != angles_rad.size())
      throw std::invalid_argument("contour pair arrays must share one size");
    for (std::size_t i = 0; i < angles_rad.size(); ++i) {
      if (!(lumen_radii[i] > 0.0))
        throw std::invalid_argument("lumen radii must be > 0");
      if (!(thickness[i] >= 0.0))
        throw std::invalid_argument("wall thickness must be >= 0");
    }
  }
};

struct ContourPolygons {
  Polygon lumen;
  Polygon outer;
};

// Polygons through the per-angle ray endpoints, vertices in angle order.
inline ContourPolygons to_polygons(const ContourPair& cp) {
  cp.validate();
  ContourPolygons out;
  out.lumen.reserve(cp.n_angles());
  out.outer.reserve(cp.n_angles());
  for (std::size_t i = 0; i < cp.n_angles(); ++i) {
    double c = std::cos(cp.angles_rad[i]);
    double s = std::sin(cp.angles_rad[i]);
    out.lumen.push_back({cp.center.x + cp.lumen_radii[i] * c,
                         cp.center.y + cp.lumen_radii[i] * s});
    out.outer.push_back({cp.center.x + cp.outer_radius(i) * c,
                         cp.center.y + cp.outer_radius(i) * s});
  }
  return out;
}

// In-plane pixel grid of one axial slice.
struct SliceGrid {
  int nx = 1, ny = 1;
  double sx = 1.0, sy = 1.0;  // mm per pixel
  double ox = 0.0, oy = 0.0;  // world position of pixel (0,0) center

  bool operator==(const SliceGrid&) const = default;
};

inline SliceGrid slice_grid(const Volume& vol) {
  return {vol.dims()[0], vol.dims()[1], vol.spacing()[0], vol.spacing()[1],
          vol.origin()[0], vol.origin()[1]};
}

// Fractional-coverage mask in [0,1] per pixel; binarize() thresholds at 0.5.
struct SliceMask {
  SliceGrid grid;
  std::vector<double> values;

  double at(int i, int j) const {
    return values[static_cast<std::size_t>(j) * grid.nx + i];
  }
  double& at(int i, int j) {
    return values[static_cast<std::size_t>(j) * grid.nx + i];
  }
  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

struct BinaryMask {
  SliceGrid grid;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int i, int j) const {
    return values[static_cast<std::size_t>(j) * grid.nx + i];
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
};

inline SliceMask make_mask(const SliceGrid& grid) {
  SliceMask m;
  m.grid = grid;
  m.values.assign(static_cast<std::size_t>(grid.nx) * grid.ny, 0.0);
  return m;
}

inline BinaryMask binarize(const SliceMask& mask, double threshold = 0.5) {
  BinaryMask b;
  b.grid = mask.grid;
  b.values.resize(mask.values.size());
  for (std::size_t n = 0; n < mask.values.size(); ++n)
    b.values[n] = mask.values[n] >= threshold ? 1 : 0;
  return b;
}

// Fraction of an s x s subsample lattice of each pixel strictly inside the
// polygon (even-odd rule). A zero-area polygon rasterizes to an empty mask.
inline SliceMask rasterize(const Polygon& poly, const SliceGrid& grid,
                           int supersample = 4) {
  if (supersample < 1) throw std::invalid_argument("supersample must be >= 1");
  SliceMask mask = make_mask(grid);
  if (poly.size() < 3 || polygon_area(poly) == 0.0) return mask;

  // Pixels whose footprint can intersect the polygon's bounding box.
  double min_x = poly[0].x, max_x = poly[0].x;
  double min_y = poly[0].y, max_y = poly[0].y;
  for (const Vec2& v : poly) {
    min_x = std::min(min_x, v.x);
    max_x = std::max(max_x, v.x);
    min_y = std::min(min_y, v.y);
    max_y = std::max(max_y, v.y);
  }
  int i_lo = std::max(0, static_cast<int>(
                             std::floor((min_x - grid.ox) / grid.sx - 0.5)));
  int i_hi = std::min(grid.nx - 1, static_cast<int>(std::ceil(
                                       (max_x - grid.ox) / grid.sx + 0.5)));
  int j_lo = std::max(0, static_cast<int>(
                             std::floor((min_y - grid.oy) / grid.sy - 0.5)));
  int j_hi = std::min(grid.ny - 1, static_cast<int>(std::ceil(
                                       (max_y - grid.oy) / grid.sy + 0.5)));

  const double inv_s = 1.0 / supersample;
  const double w = 1.0 / (static_cast<double>(supersample) * supersample);
  for (int j = j_lo; j <= j_hi; ++j) {
    for (int i = i_lo; i <= i_hi; ++i) {
      double cx = grid.ox + i * grid.sx;
      double cy = grid.oy + j * grid.sy;
      double frac = 0.0;
      for (int v = 0; v < supersample; ++v) {
        double py = cy + ((v + 0.5) * inv_s - 0.5) * grid.sy;
        for (int u = 0; u < supersample; ++u) {
          double px = cx + ((u + 0.5) * inv_s - 0.5) * grid.sx;
          if (point_in_polygon(poly, {px, py})) frac += w;
        }
      }
      mask.at(i, j) = frac;
    }
  }
  return mask;
}

// Ring-shaped wall region: outer coverage minus lumen coverage, clamped
// at zero.
inline SliceMask wall_mask(const ContourPair& cp, const SliceGrid& grid,
                           int supersample = 4) {
  ContourPolygons polys = to_polygons(cp);
  SliceMask outer = rasterize(polys.outer, grid, supersample);
  SliceMask lumen = rasterize(polys.lumen, grid, supersample);
  for (std::size_t n = 0; n < outer.values.size(); ++n)
    outer.values[n] = std::max(0.0, outer.values[n] - lumen.values[n]);
  return outer;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json contour_to_json(const ContourPair& cp) {
  nlohmann::json j;
  j["slice"] = cp.slice;
  j["center_mm"] = {cp.center.x, cp.center.y, cp.center.z};
  j["angles_rad"] = cp.angles_rad;
  j["lumen_radii_mm"] = cp.lumen_radii;
  j["thickness_mm"] = cp.thickness;
  return j;
}

inline ContourPair contour_from_json(const nlohmann::json& j) {
  ContourPair cp;
  cp.slice = j.at("slice").get<int>();
  auto c = j.at("center_mm").get<std::vector<double>>();
  if (c.size() != 3) throw std::runtime_error("center_mm must have 3 entries");
  cp.center = {c[0], c[1], c[2]};
  cp.angles_rad = j.at("angles_rad").get<std::vector<double>>();
  cp.lumen_radii = j.at("lumen_radii_mm").get<std::vector<double>>();
  cp.thickness = j.at("thickness_mm").get<std::vector<double>>();
  cp.validate();
  return cp;
}

// 8-bit binary PGM, for eyeballing masks and overlays.
inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("pgm byte count does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path);
}

inline void write_mask_pgm(const SliceMask& mask, const std::string& path) {
  std::vector<std::uint8_t> bytes(mask.values.size());
  for (std::size_t n = 0; n < mask.values.size(); ++n) {
    double v = std::clamp(mask.values[n], 0.0, 1.0);
    bytes[n] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(path, mask.grid.nx, mask.grid.ny, bytes);
}

}  // namespace polarring
