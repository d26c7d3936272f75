#pragma once

// Deterministic synthetic vessel volumes with exact analytic ground truth.
// Each vessel is a star-convex tube: a circular lumen around a sinusoidal
// centerline, wrapped by a wall whose thickness carries an optional
// Gaussian plaque bump in angle and depth. Cross-sections therefore have
// one radius per angle, so polar ground truth is exact by construction.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "polarring/contour.hpp"
#include "polarring/json_util.hpp"
#include "polarring/rng.hpp"
#include "polarring/volume.hpp"

namespace polarring {

enum class ArteryClass { internal_carotid, external_carotid };

inline const char* artery_name(ArteryClass c) {
  return c == ArteryClass::internal_carotid ? "internal" : "external";
}

inline ArteryClass artery_from_name(const std::string& s) {
  if (s == "internal") return ArteryClass::internal_carotid;
  if (s == "external") return ArteryClass::external_carotid;
  throw std::runtime_error("unknown artery class \"" + s + "\"");
}

struct PhantomConfig {
  std::array<int, 3> dims = {48, 48, 24};
  std::array<double, 3> spacing_mm = {0.5, 0.5, 0.5};
  std::array<double, 3> origin_mm = {0.0, 0.0, 0.0};

  int vessel_count = 1;       // 1 or 2
  bool bifurcation = false;   // two vessels sharing a trunk below the branch

  double lumen_radius_min_mm = 1.8;
  double lumen_radius_max_mm = 2.6;
  double wall_thickness_min_mm = 1.0;
  double wall_thickness_max_mm = 1.5;

  double plaque_amplitude_mm = 0.6;      // extra thickness at the bump apex
  double plaque_angular_sigma_rad = 0.7;
  double plaque_axial_sigma_mm = 3.0;

  double sinusoid_amplitude_mm = 1.2;
  double sinusoid_period_mm = 24.0;

  double branch_slice_frac = 0.45;     // bifurcation point along z
  double branch_separation_mm = 7.0;   // center distance at the top slice

  double intensity_lumen = 0.1;
  double intensity_wall = 0.9;
  double intensity_background = 0.5;
  double noise_sigma = 0.0;

  int truth_angles = 31;  // evaluation angles for the stored contours
  std::uint64_t seed = 1;

  void validate() const {
    if (dims[0] < 4 || dims[1] < 4 || dims[2] < 2)
      throw std::invalid_argument("phantom dims too small");
    if (spacing_mm[0] <= 0 || spacing_mm[1] <= 0 || spacing_mm[2] <= 0)
      throw std::invalid_argument("phantom spacing must be > 0");
    if (vessel_count < 1 || vessel_count > 2)
      throw std::invalid_argument("vessel count must be 1 or 2");
    if (bifurcation && vessel_count != 2)
      throw std::invalid_argument("bifurcation requires two vessels");
    if (!(lumen_radius_min_mm > 0.0) ||
        lumen_radius_max_mm < lumen_radius_min_mm)
      throw std::invalid_argument("bad lumen radius range");
    if (wall_thickness_min_mm < 0.0 ||
        wall_thickness_max_mm < wall_thickness_min_mm)
      throw std::invalid_argument("bad wall thickness range");
    if (plaque_amplitude_mm < 0.0 || sinusoid_amplitude_mm < 0.0)
      throw std::invalid_argument("amplitudes must be >= 0");
    if (truth_angles < 4)
      throw std::invalid_argument("need at least 4 truth angles");

    // Containment: worst-case lateral reach of any vessel surface must stay
    // one voxel inside the slice. Rejecting here beats silently clipping
    // tubes at the border.
    double reach = sinusoid_amplitude_mm + lumen_radius_max_mm +
                   wall_thickness_max_mm + plaque_amplitude_mm;
    if (vessel_count == 2) reach += 0.5 * branch_separation_mm;
    double margin_x = 0.5 * (dims[0] - 1) * spacing_mm[0] - spacing_mm[0];
    double margin_y = 0.5 * (dims[1] - 1) * spacing_mm[1] - spacing_mm[1];
    if (reach > margin_x || reach > margin_y) {
      std::ostringstream msg;
      msg << "phantom config violates containment: lateral reach " << reach
          << " mm exceeds margin " << std::min(margin_x, margin_y)
          << " mm; shrink radii/amplitudes or enlarge dims";
      throw std::invalid_argument(msg.str());
    }
  }
};

// Analytic description of one vessel, sufficient to reproduce its geometry
// at any (angle, z).
struct VesselTruth {
  ArteryClass label = ArteryClass::internal_carotid;
  int slice_begin = 0;  // [slice_begin, slice_end)
  int slice_end = 0;
  std::vector<WorldPoint> centerline;   // one vertex per slice, ascending z
  std::vector<ContourPair> contours;    // per slice, at the truth angles

  const ContourPair& contour_at(int slice) const {
    if (slice < slice_begin || slice >= slice_end)
      throw std::out_of_range("slice outside vessel extent");
    return contours[static_cast<std::size_t>(slice - slice_begin)];
  }
  bool covers(int slice) const {
    return slice >= slice_begin && slice < slice_end;
  }
};

struct PhantomTruth {
  std::array<int, 3> dims = {1, 1, 1};
  std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0};
  std::array<double, 3> origin_mm = {0.0, 0.0, 0.0};
  std::vector<double> angles_rad;
  std::vector<VesselTruth> vessels;
};

namespace detail {

struct VesselShape {
  ArteryClass label;
  int slice_begin, slice_end;
  double base_x, base_y;       // trunk center
  double branch_dir;           // -1, 0 or +1; lateral branch direction
  double branch_z0, branch_z1; // branch ramp in world z
  double branch_sep;           // this vessel's share of the separation
  double sin_amp_x, sin_amp_y, sin_phase_x, sin_phase_y, sin_period;
  double lumen_radius;
  double thickness_base;
  double plaque_amp, plaque_theta, plaque_z, plaque_sigma_theta,
      plaque_sigma_z;

  Vec2 center_at(double z) const {
    double x = base_x;
    double y = base_y;
    if (sin_period > 0.0) {
      x += sin_amp_x * std::sin(2.0 * kPi * z / sin_period + sin_phase_x);
      y += sin_amp_y * std::sin(2.0 * kPi * z / sin_period + sin_phase_y);
    }
    if (branch_dir != 0.0 && z > branch_z0) {
      double f = (z - branch_z0) / (branch_z1 - branch_z0);
      f = std::min(1.0, std::max(0.0, f));
      f = f * f * (3.0 - 2.0 * f);  // smoothstep keeps the branch C1
      x += branch_dir * branch_sep * f;
    }
    return {x, y};
  }

  double thickness_at(double theta, double z) const {
    double t = thickness_base;
    if (plaque_amp > 0.0) {
      double d = std::remainder(theta - plaque_theta, 2.0 * kPi);
      double arg = d * d / (2.0 * plaque_sigma_theta * plaque_sigma_theta) +
                   (z - plaque_z) * (z - plaque_z) /
                       (2.0 * plaque_sigma_z * plaque_sigma_z);
      t += plaque_amp * std::exp(-arg);
    }
    return t;
  }

  double outer_radius_at(double theta, double z) const {
    return lumen_radius + thickness_at(theta, z);
  }
};

inline std::vector<VesselShape> plan_vessels(const PhantomConfig& cfg) {
  Rng geo(derive_seed(cfg.seed, "phantom.geometry"));
  double cx = cfg.origin_mm[0] + 0.5 * (cfg.dims[0] - 1) * cfg.spacing_mm[0];
  double cy = cfg.origin_mm[1] + 0.5 * (cfg.dims[1] - 1) * cfg.spacing_mm[1];
  double z_lo = cfg.origin_mm[2];
  double z_hi = cfg.origin_mm[2] + (cfg.dims[2] - 1) * cfg.spacing_mm[2];

  std::vector<VesselShape> shapes;
  for (int v = 0; v < cfg.vessel_count; ++v) {
    VesselShape s{};
    s.label = v == 0 ? ArteryClass::internal_carotid
                     : ArteryClass::external_carotid;
    s.slice_begin = 0;
    s.slice_end = cfg.dims[2];
    s.base_x = cx;
    s.base_y = cy;
    s.branch_dir = 0.0;
    s.branch_sep = 0.0;
    s.branch_z0 = z_lo;
    s.branch_z1 = z_hi;
    s.sin_period = cfg.sinusoid_period_mm;
    // Random amplitude split keeps the Euclidean offset within the budget.
    double beta = geo.uniform(0.0, 2.0 * kPi);
    s.sin_amp_x = cfg.sinusoid_amplitude_mm * std::cos(beta);
    s.sin_amp_y = cfg.sinusoid_amplitude_mm * std::sin(beta);
    s.sin_phase_x = geo.uniform(0.0, 2.0 * kPi);
    s.sin_phase_y = geo.uniform(0.0, 2.0 * kPi);
    s.lumen_radius =
        geo.uniform(cfg.lumen_radius_min_mm, cfg.lumen_radius_max_mm);
    s.thickness_base =
        geo.uniform(cfg.wall_thickness_min_mm, cfg.wall_thickness_max_mm);
    s.plaque_amp = cfg.plaque_amplitude_mm;
    s.plaque_theta = geo.uniform(0.0, 2.0 * kPi);
    s.plaque_z = geo.uniform(z_lo + 0.2 * (z_hi - z_lo),
                             z_lo + 0.8 * (z_hi - z_lo));
    s.plaque_sigma_theta = cfg.plaque_angular_sigma_rad;
    s.plaque_sigma_z = cfg.plaque_axial_sigma_mm;

    if (cfg.vessel_count == 2) {
      double dir = v == 0 ? 1.0 : -1.0;
      s.branch_sep = 0.5 * cfg.branch_separation_mm;
      if (cfg.bifurcation) {
        // Shared trunk below the branch slice, smooth lateral split above.
        double z_b = z_lo + cfg.branch_slice_frac * (z_hi - z_lo);
        s.branch_dir = dir;
        s.branch_z0 = z_b;
        s.branch_z1 = z_hi;
        if (v == 1) {
          // The external branch only exists above the bifurcation, and the
          // trunk geometry below it is shared with the first vessel.
          int k_b = static_cast<int>(
              std::ceil((z_b - z_lo) / cfg.spacing_mm[2]));
          s.slice_begin = std::min(k_b, cfg.dims[2] - 1);
          s.sin_amp_x = shapes[0].sin_amp_x;
          s.sin_amp_y = shapes[0].sin_amp_y;
          s.sin_phase_x = shapes[0].sin_phase_x;
          s.sin_phase_y = shapes[0].sin_phase_y;
        }
      } else {
        // Two parallel tubes, fixed lateral offset over the whole extent.
        s.base_x += dir * 0.5 * cfg.branch_separation_mm;
      }
    }
    shapes.push_back(s);
  }
  return shapes;
}

}  // namespace detail

// Builds the voxel volume and its analytic truth. Identical config and seed
// give bit-identical results.
inline std::pair<Volume, PhantomTruth> generate_phantom(
    const PhantomConfig& cfg) {
  cfg.validate();
  std::vector<detail::VesselShape> shapes = detail::plan_vessels(cfg);

  PhantomTruth truth;
  truth.dims = cfg.dims;
  truth.spacing_mm = cfg.spacing_mm;
  truth.origin_mm = cfg.origin_mm;
  truth.angles_rad.resize(cfg.truth_angles);
  for (int i = 0; i < cfg.truth_angles; ++i)
    truth.angles_rad[i] = 2.0 * kPi * i / cfg.truth_angles;

  for (const auto& s : shapes) {
    VesselTruth vt;
    vt.label = s.label;
    vt.slice_begin = s.slice_begin;
    vt.slice_end = s.slice_end;
    for (int k = s.slice_begin; k < s.slice_end; ++k) {
      double z = cfg.origin_mm[2] + k * cfg.spacing_mm[2];
      Vec2 c = s.center_at(z);
      vt.centerline.push_back({c.x, c.y, z});
      ContourPair cp;
      cp.center = {c.x, c.y, z};
      cp.slice = k;
      cp.angles_rad = truth.angles_rad;
      cp.lumen_radii.assign(truth.angles_rad.size(), s.lumen_radius);
      cp.thickness.resize(truth.angles_rad.size());
      for (std::size_t i = 0; i < truth.angles_rad.size(); ++i)
        cp.thickness[i] = s.thickness_at(truth.angles_rad[i], z);
      vt.contours.push_back(std::move(cp));
    }
    truth.vessels.push_back(std::move(vt));
  }

  Volume vol(cfg.dims, cfg.spacing_mm, cfg.origin_mm,
             static_cast<float>(cfg.intensity_background));
  for (int k = 0; k < cfg.dims[2]; ++k) {
    double z = cfg.origin_mm[2] + k * cfg.spacing_mm[2];
    for (int j = 0; j < cfg.dims[1]; ++j) {
      double y = cfg.origin_mm[1] + j * cfg.spacing_mm[1];
      for (int i = 0; i < cfg.dims[0]; ++i) {
        double x = cfg.origin_mm[0] + i * cfg.spacing_mm[0];
        bool in_lumen = false;
        bool in_wall = false;
        for (const auto& s : shapes) {
          if (k < s.slice_begin || k >= s.slice_end) continue;
          Vec2 c = s.center_at(z);
          double dx = x - c.x;
          double dy = y - c.y;
          double d = std::sqrt(dx * dx + dy * dy);
          if (d < s.lumen_radius) {
            in_lumen = true;
            break;
          }
          double theta = std::atan2(dy, dx);
          if (d < s.outer_radius_at(theta, z)) in_wall = true;
        }
        if (in_lumen)
          vol.at(i, j, k) = static_cast<float>(cfg.intensity_lumen);
        else if (in_wall)
          vol.at(i, j, k) = static_cast<float>(cfg.intensity_wall);
      }
    }
  }

  if (cfg.noise_sigma > 0.0) {
    Rng noise(derive_seed(cfg.seed, "phantom.noise"));
    for (std::size_t n = 0; n < vol.size(); ++n) {
      double v = vol.data()[n] + noise.normal(0.0, cfg.noise_sigma);
      vol.data()[n] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return {std::move(vol), std::move(truth)};
}

struct TruthMasks {
  SliceMask lumen;
  SliceMask outer;
};

// Union of the per-vessel contour masks on one axial slice. Slices no
// vessel crosses give empty masks.
inline TruthMasks rasterize_truth_masks(const PhantomTruth& truth,
                                        const Volume& vol, int slice,
                                        int supersample = 4) {
  SliceGrid grid = slice_grid(vol);
  TruthMasks out{make_mask(grid), make_mask(grid)};
  for (const auto& vessel : truth.vessels) {
    if (!vessel.covers(slice)) continue;
    ContourPolygons polys = to_polygons(vessel.contour_at(slice));
    SliceMask lumen = rasterize(polys.lumen, grid, supersample);
    SliceMask outer = rasterize(polys.outer, grid, supersample);
    for (std::size_t n = 0; n < lumen.values.size(); ++n) {
      out.lumen.values[n] = std::max(out.lumen.values[n], lumen.values[n]);
      out.outer.values[n] = std::max(out.outer.values[n], outer.values[n]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config and truth serialization

inline PhantomConfig phantom_config_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"dims", "spacing_mm", "origin_mm", "vessel_count", "bifurcation",
              "lumen_radius_min_mm", "lumen_radius_max_mm",
              "wall_thickness_min_mm", "wall_thickness_max_mm",
              "plaque_amplitude_mm", "plaque_angular_sigma_rad",
              "plaque_axial_sigma_mm", "sinusoid_amplitude_mm",
              "sinusoid_period_mm", "branch_slice_frac", "branch_separation_mm",
              "intensity_lumen", "intensity_wall", "intensity_background",
              "noise_sigma", "truth_angles", "seed"},
             "phantom config");
  PhantomConfig c;
  read_field(j, "dims", c.dims);
  read_field(j, "spacing_mm", c.spacing_mm);
  read_field(j, "origin_mm", c.origin_mm);
  read_field(j, "vessel_count", c.vessel_count);
  read_field(j, "bifurcation", c.bifurcation);
  read_field(j, "lumen_radius_min_mm", c.lumen_radius_min_mm);
  read_field(j, "lumen_radius_max_mm", c.lumen_radius_max_mm);
  read_field(j, "wall_thickness_min_mm", c.wall_thickness_min_mm);
  read_field(j, "wall_thickness_max_mm", c.wall_thickness_max_mm);
  read_field(j, "plaque_amplitude_mm", c.plaque_amplitude_mm);
  read_field(j, "plaque_angular_sigma_rad", c.plaque_angular_sigma_rad);
  read_field(j, "plaque_axial_sigma_mm", c.plaque_axial_sigma_mm);
  read_field(j, "sinusoid_amplitude_mm", c.sinusoid_amplitude_mm);
  read_field(j, "sinusoid_period_mm", c.sinusoid_period_mm);
  read_field(j, "branch_slice_frac", c.branch_slice_frac);
  read_field(j, "branch_separation_mm", c.branch_separation_mm);
  read_field(j, "intensity_lumen", c.intensity_lumen);
  read_field(j, "intensity_wall", c.intensity_wall);
  read_field(j, "intensity_background", c.intensity_background);
  read_field(j, "noise_sigma", c.noise_sigma);
  read_field(j, "truth_angles", c.truth_angles);
  read_field(j, "seed", c.seed);
  return c;
}

inline nlohmann::json phantom_config_to_json(const PhantomConfig& c) {
  nlohmann::json j;
  j["dims"] = c.dims;
  j["spacing_mm"] = c.spacing_mm;
  j["origin_mm"] = c.origin_mm;
  j["vessel_count"] = c.vessel_count;
  j["bifurcation"] = c.bifurcation;
  j["lumen_radius_min_mm"] = c.lumen_radius_min_mm;
  j["lumen_radius_max_mm"] = c.lumen_radius_max_mm;
  j["wall_thickness_min_mm"] = c.wall_thickness_min_mm;
  j["wall_thickness_max_mm"] = c.wall_thickness_max_mm;
  j["plaque_amplitude_mm"] = c.plaque_amplitude_mm;
  j["plaque_angular_sigma_rad"] = c.plaque_angular_sigma_rad;
  j["plaque_axial_sigma_mm"] = c.plaque_axial_sigma_mm;
  j["sinusoid_amplitude_mm"] = c.sinusoid_amplitude_mm;
  j["sinusoid_period_mm"] = c.sinusoid_period_mm;
  j["branch_slice_frac"] = c.branch_slice_frac;
  j["branch_separation_mm"] = c.branch_separation_mm;
  j["intensity_lumen"] = c.intensity_lumen;
  j["intensity_wall"] = c.intensity_wall;
  j["intensity_background"] = c.intensity_background;
  j["noise_sigma"] = c.noise_sigma;
  j["truth_angles"] = c.truth_angles;
  j["seed"] = c.seed;
  return j;
}

inline nlohmann::json truth_to_json(const PhantomTruth& t) {
  nlohmann::json j;
  j["version"] = 1;
  j["dims"] = t.dims;
  j["spacing_mm"] = t.spacing_mm;
  j["origin_mm"] = t.origin_mm;
  j["angles_rad"] = t.angles_rad;
  j["vessels"] = nlohmann::json::array();
  for (const auto& v : t.vessels) {
    nlohmann::json jv;
    jv["label"] = artery_name(v.label);
    jv["slice_begin"] = v.slice_begin;
    jv["slice_end"] = v.slice_end;
    auto line = nlohmann::json::array();
    for (const auto& p : v.centerline) line.push_back({p.x, p.y, p.z});
    jv["centerline_mm"] = std::move(line);
    auto contours = nlohmann::json::array();
    for (const auto& cp : v.contours) contours.push_back(contour_to_json(cp));
    jv["contours"] = std::move(contours);
    j["vessels"].push_back(std::move(jv));
  }
  return j;
}

inline PhantomTruth truth_from_json(const nlohmann::json& j) {
  check_version(j, "truth file");
  PhantomTruth t;
  t.dims = j.at("dims").get<std::array<int, 3>>();
  t.spacing_mm = j.at("spacing_mm").get<std::array<double, 3>>();
  t.origin_mm = j.at("origin_mm").get<std::array<double, 3>>();
  t.angles_rad = j.at("angles_rad").get<std::vector<double>>();
  for (const auto& jv : j.at("vessels")) {
    VesselTruth v;
    v.label = artery_from_name(jv.at("label").get<std::string>());
    v.slice_begin = jv.at("slice_begin").get<int>();
    v.slice_end = jv.at("slice_end").get<int>();
    for (const auto& p : jv.at("centerline_mm"))
      v.centerline.push_back(
          {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    for (const auto& jc : jv.at("contours"))
      v.contours.push_back(contour_from_json(jc));
    if (v.centerline.size() != v.contours.size() ||
        static_cast<int>(v.centerline.size()) != v.slice_end - v.slice_begin)
      throw std::runtime_error("truth file: inconsistent vessel arrays");
    t.vessels.push_back(std::move(v));
  }
  return t;
}

inline void save_truth(const PhantomTruth& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << truth_to_json(t).dump(2) << "\n";
}

inline PhantomTruth load_truth(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return truth_from_json(nlohmann::json::parse(f));
}

}  // namespace polarring
