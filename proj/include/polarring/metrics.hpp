#pragma once

// Overlap and distance metrics for contour pairs, plus the CSV / JSON
// report writers. Dice is computed on binarized wall masks; Hausdorff on
// densified contour polygons.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polarring/contour.hpp"
#include "polarring/geometry.hpp"
#include "polarring/phantom.hpp"
#include "polarring/volume.hpp"

namespace polarring {

// Dice similarity of two binary masks on the same grid. Two empty masks
// agree perfectly by convention.
inline double dice(const BinaryMask& a, const BinaryMask& b) {
  if (!(a.grid == b.grid))
    throw std::invalid_argument("dice: masks live on different grids");
  std::size_t inter = 0;
  for (std::size_t n = 0; n < a.values.size(); ++n)
    inter += a.values[n] & b.values[n];
  std::size_t total = a.count() + b.count();
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

namespace detail {

inline double directed_hausdorff(const std::vector<Vec2>& from,
                                 const std::vector<Vec2>& to) {
  double worst = 0.0;
  for (const Vec2& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& q : to) {
      double dx = p.x - q.x, dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
      if (best == 0.0) break;
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace detail

// Symmetric Hausdorff distance between polygon boundaries, both densified
// to the given vertex spacing so edge interiors count too.
inline double hausdorff(const Polygon& a, const Polygon& b,
                        double max_step_mm = 0.05) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("hausdorff needs non-empty polygons");
  std::vector<Vec2> da = densify_polygon(a, max_step_mm);
  std::vector<Vec2> db = densify_polygon(b, max_step_mm);
  return std::max(detail::directed_hausdorff(da, db),
                  detail::directed_hausdorff(db, da));
}

struct ContourMetrics {
  double dsc_wall = 0.0;
  double hd_lumen_mm = 0.0;
  double hd_outer_mm = 0.0;
};

inline ContourMetrics compare_contours(const ContourPair& pred,
                                       const ContourPair& truth,
                                       const SliceGrid& grid) {
  ContourMetrics m;
  m.dsc_wall =
      dice(binarize(wall_mask(pred, grid)), binarize(wall_mask(truth, grid)));
  ContourPolygons pp = to_polygons(pred);
  ContourPolygons tp = to_polygons(truth);
  m.hd_lumen_mm = hausdorff(pp.lumen, tp.lumen);
  m.hd_outer_mm = hausdorff(pp.outer, tp.outer);
  return m;
}

struct CaseResult {
  std::string id;  // e.g. "internal/12"
  ContourMetrics metrics;
  bool valid = true;  // false when metrics could not be computed
};

struct MetricSummary {
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

inline MetricSummary summarize(const std::vector<double>& values) {
  if (values.empty())
    throw std::invalid_argument("cannot summarize an empty metric list");
  return {percentile(values, 50.0), percentile(values, 25.0),
          percentile(values, 75.0)};
}

struct EvalSummary {
  std::size_t cases = 0;
  MetricSummary dsc_wall;
  MetricSummary hd_lumen_mm;
  MetricSummary hd_outer_mm;
};

// Aggregates over valid cases only.
inline EvalSummary summarize_cases(const std::vector<CaseResult>& results) {
  EvalSummary s;
  std::vector<double> dsc, hdl, hdo;
  for (const auto& r : results) {
    if (!r.valid) continue;
    dsc.push_back(r.metrics.dsc_wall);
    hdl.push_back(r.metrics.hd_lumen_mm);
    hdo.push_back(r.metrics.hd_outer_mm);
  }
  s.cases = dsc.size();
  s.dsc_wall = summarize(dsc);
  s.hd_lumen_mm = summarize(hdl);
  s.hd_outer_mm = summarize(hdo);
  return s;
}

struct EvalOutcome {
  std::vector<CaseResult> cases;
  EvalSummary summary;
  std::vector<std::string> warnings;
};

// Scores predicted contours against phantom truth. Each prediction is
// matched to the truth vessel covering its slice whose center is nearest;
// predictions on slices no vessel covers are skipped with a warning.
inline EvalOutcome evaluate_volume(const std::vector<ContourPair>& predictions,
                                   const PhantomTruth& truth,
                                   const SliceGrid& grid) {
  EvalOutcome out;
  for (const auto& pred : predictions) {
    const VesselTruth* best = nullptr;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const auto& vessel : truth.vessels) {
      if (!vessel.covers(pred.slice)) continue;
      const WorldPoint& c = vessel.contour_at(pred.slice).center;
      double dx = c.x - pred.center.x, dy = c.y - pred.center.y;
      double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = &vessel;
      }
    }
    if (!best) {
      out.warnings.push_back("slice " + std::to_string(pred.slice) +
                             ": no truth contour, prediction skipped");
      continue;
    }
    CaseResult cr;
    cr.id = std::string(artery_name(best->label)) + "/" +
            std::to_string(pred.slice);
    try {
      cr.metrics = compare_contours(pred, best->contour_at(pred.slice), grid);
    } catch (const std::exception& e) {
      cr.valid = false;
      out.warnings.push_back(cr.id + ": " + e.what());
    }
    out.cases.push_back(std::move(cr));
  }
  if (!out.cases.empty()) {
    bool any_valid = false;
    for (const auto& c : out.cases) any_valid |= c.valid;
    if (any_valid) out.summary = summarize_cases(out.cases);
  }
  return out;
}

inline void write_metrics_csv(const std::vector<CaseResult>& results,
                              const std::string& file) {
  std::ofstream f(file);
  if (!f) throw std::runtime_error("cannot write " + file);
  f << "slice_id,dsc_wall,hd_lumen_mm,hd_outer_mm\n";
  f << std::setprecision(6) << std::fixed;
  for (const auto& r : results) {
    if (!r.valid) continue;  // reported via warnings instead
    f << r.id << "," << r.metrics.dsc_wall << "," << r.metrics.hd_lumen_mm
      << "," << r.metrics.hd_outer_mm << "\n";
  }
}

inline nlohmann::json summary_to_json(const EvalSummary& s) {
  auto metric = [](const MetricSummary& m) {
    return nlohmann::json{
        {"median", m.median}, {"q25", m.q25}, {"q75", m.q75}};
  };
  return nlohmann::json{{"version", 1},
                        {"cases", s.cases},
                        {"dsc_wall", metric(s.dsc_wall)},
                        {"hd_lumen_mm", metric(s.hd_lumen_mm)},
                        {"hd_outer_mm", metric(s.hd_outer_mm)}};
}

inline void write_summary_json(const EvalSummary& s, const std::string& file) {
  std::ofstream f(file);
  if (!f) throw std::runtime_error("cannot write " + file);
  f << summary_to_json(s).dump(2) << "\n";
}

}  // namespace polarring
