#pragma once

// Planar geometry primitives shared by the contour, polar and metrics code:
// polygons over axial-plane world coordinates (mm), point-in-polygon tests,
// ray casting against polygon boundaries and boundary densification.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace polarring {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

// Vertices in order, implicitly closed (last connects back to first).
using Polygon = std::vector<Vec2>;

// Signed area by the shoelace formula; positive for counter-clockwise order.
inline double polygon_signed_area(const Polygon& poly) {
  double acc = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    acc += cross(a, b);
  }
  return 0.5 * acc;
}

inline double polygon_area(const Polygon& poly) {
  return std::abs(polygon_signed_area(poly));
}

// Even-odd rule with the usual half-open edge convention, so a point is
// counted in exactly one of two polygons sharing an edge.
inline bool point_in_polygon(const Polygon& poly, Vec2 p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      double x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

// True only for a transversal crossing at interior points of both segments.
// Shared endpoints and collinear overlap do not count.
inline bool segments_properly_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  double d1 = cross(p2 - p1, q1 - p1);
  double d2 = cross(p2 - p1, q2 - p1);
  double d3 = cross(q2 - q1, p1 - q1);
  double d4 = cross(q2 - q1, p2 - q1);
  return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

inline int count_proper_intersections(const Polygon& a, const Polygon& b) {
  int count = 0;
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < na; ++i) {
    Vec2 p1 = a[i];
    Vec2 p2 = a[(i + 1) % na];
    for (std::size_t j = 0; j < nb; ++j) {
      Vec2 q1 = b[j];
      Vec2 q2 = b[(j + 1) % nb];
      if (segments_properly_intersect(p1, p2, q1, q2)) ++count;
    }
  }
  return count;
}

// First intersection of the ray origin + t*dir (t >= 0) with the polygon
// boundary. Returns the smallest such t, or nullopt if the ray misses.
inline std::optional<double> ray_polygon_first_hit(const Polygon& poly,
                                                   Vec2 origin, Vec2 dir) {
  constexpr double kEdgeSlack = 1e-12;
  std::optional<double> best;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i];
    Vec2 e = poly[(i + 1) % n] - a;
    double denom = cross(dir, e);
    if (std::abs(denom) < 1e-300) continue;  // parallel edge
    Vec2 rel = a - origin;
    double t = cross(rel, e) / denom;
    double u = cross(rel, dir) / denom;
    if (u < -kEdgeSlack || u > 1.0 + kEdgeSlack) continue;
    if (t < -kEdgeSlack) continue;
    t = std::max(t, 0.0);
    if (!best || t < *best) best = t;
  }
  return best;
}

// Boundary points spaced at most max_step apart along every edge. Each edge
// contributes its start vertex plus interior subdivisions.
inline std::vector<Vec2> densify_polygon(const Polygon& poly,
                                         double max_step) {
  if (max_step <= 0.0) throw std::invalid_argument("densify step must be > 0");
  std::vector<Vec2> pts;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 a = poly[i];
    Vec2 b = poly[(i + 1) % n];
    double len = norm(b - a);
    int pieces = std::max(1, static_cast<int>(std::ceil(len / max_step)));
    for (int s = 0; s < pieces; ++s) {
      double f = static_cast<double>(s) / pieces;
      pts.push_back(a + f * (b - a));
    }
  }
  return pts;
}

}  // namespace polarring
