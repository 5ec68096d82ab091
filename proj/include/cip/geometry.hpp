#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "cip/util.hpp"

namespace cip {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }
inline bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }

// Rotate by angle (radians, counter-clockwise).
inline Vec2 rotate(Vec2 v, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// World point into the frame anchored at `origin` with +x along `heading`.
inline Vec2 to_frame(Vec2 p, Vec2 origin, double heading) {
  return rotate(p - origin, -heading);
}

inline Vec2 from_frame(Vec2 p, Vec2 origin, double heading) {
  return origin + rotate(p, heading);
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double len2 = dot(ab, ab);
  if (len2 == 0.0) return dist(p, a);
  double t = clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return dist(p, a + t * ab);
}

// Proper or touching intersection of segments [p1,p2] and [q1,q2].
inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) {
    double v = cross(b - a, c - a);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
  };
  auto on_seg = [](Vec2 a, Vec2 b, Vec2 c) {
    return std::min(a.x, b.x) - 1e-12 <= c.x && c.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= c.y && c.y <= std::max(a.y, b.y) + 1e-12;
  };
  int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_seg(p1, p2, q1)) return true;
  if (o2 == 0 && on_seg(p1, p2, q2)) return true;
  if (o3 == 0 && on_seg(q1, q2, p1)) return true;
  if (o4 == 0 && on_seg(q1, q2, p2)) return true;
  return false;
}

// Simple polygon; implicit edge from back() to front().
struct Polygon {
  std::vector<Vec2> points;
};

inline double polygon_signed_area(const Polygon& poly) {
  double a = 0.0;
  const auto& pts = poly.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2& p = pts[i];
    const Vec2& q = pts[(i + 1) % pts.size()];
    a += cross(p, q);
  }
  return 0.5 * a;
}

inline void make_ccw(Polygon& poly) {
  if (polygon_signed_area(poly) < 0.0)
    std::reverse(poly.points.begin(), poly.points.end());
}

// Boundary-inclusive point-in-polygon via the crossing form of the winding
// number. The test suite cross-checks this against a naive ray-casting oracle.
inline bool point_in_polygon(Vec2 p, const Polygon& poly, double boundary_eps = 1e-9) {
  const auto& pts = poly.points;
  if (pts.size() < 3) return false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (point_segment_distance(p, pts[i], pts[(i + 1) % pts.size()]) <= boundary_eps)
      return true;  // closed-set convention: boundary counts as inside
  }
  int wn = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Vec2 a = pts[i];
    Vec2 b = pts[(i + 1) % pts.size()];
    if (a.y <= p.y) {
      if (b.y > p.y && cross(b - a, p - a) > 0.0) ++wn;
    } else {
      if (b.y <= p.y && cross(b - a, p - a) < 0.0) --wn;
    }
  }
  return wn != 0;
}

inline bool point_in_any_polygon(Vec2 p, const std::vector<Polygon>& polys,
                                 double boundary_eps = 1e-9) {
  for (const auto& poly : polys)
    if (point_in_polygon(p, poly, boundary_eps)) return true;
  return false;
}

// Oriented bounding box: center pose plus footprint extents.
struct Obb {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // extent along heading
  double width = 0.0;   // extent across heading
};

inline std::array<Vec2, 4> obb_corners(const Obb& b) {
  Vec2 ax = {std::cos(b.heading), std::sin(b.heading)};
  Vec2 ay = {-ax.y, ax.x};
  Vec2 dx = (0.5 * b.length) * ax;
  Vec2 dy = (0.5 * b.width) * ay;
  return {b.center + dx + dy, b.center + dx - dy, b.center - dx - dy, b.center - dx + dy};
}

inline bool point_in_obb(Vec2 p, const Obb& b, double eps = 0.0) {
  Vec2 q = to_frame(p, b.center, b.heading);
  return std::abs(q.x) <= 0.5 * b.length + eps && std::abs(q.y) <= 0.5 * b.width + eps;
}

namespace detail {
inline void project_obb(const Obb& b, Vec2 axis, double& lo, double& hi) {
  auto corners = obb_corners(b);
  lo = hi = dot(corners[0], axis);
  for (int i = 1; i < 4; ++i) {
    double v = dot(corners[i], axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}
}  // namespace detail

// Separating-axis overlap amount: minimum interval overlap across the four
// candidate axes. Positive => boxes overlap by that depth, negative =>
// separated by at least that gap on the best axis, zero => touching.
inline double obb_overlap_depth(const Obb& a, const Obb& b) {
  std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)},
  };
  double depth = std::numeric_limits<double>::infinity();
  for (const Vec2& axis : axes) {
    double alo, ahi, blo, bhi;
    detail::project_obb(a, axis, alo, ahi);
    detail::project_obb(b, axis, blo, bhi);
    depth = std::min(depth, std::min(ahi, bhi) - std::max(alo, blo));
  }
  return depth;
}

// Touching boxes count as overlapping.
inline bool obb_overlap(const Obb& a, const Obb& b) {
  return obb_overlap_depth(a, b) >= 0.0;
}

}  // namespace cip
