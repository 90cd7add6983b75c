#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "canopy/error.hpp"

namespace canopy {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  friend auto operator<=>(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

// Twice the signed area of triangle (o, a, b); positive when counterclockwise.
inline double orient(Vec2 o, Vec2 a, Vec2 b) { return cross(a - o, b - o); }

inline double degrees(double radians) { return radians * 180.0 / std::numbers::pi; }
inline double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

// Axis-aligned 2D box, closed on all sides.
struct BBox {
  double xmin = std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();

  static BBox of(double xmin, double ymin, double xmax, double ymax) {
    return BBox{xmin, ymin, xmax, ymax};
  }

  bool empty() const { return !(xmin <= xmax && ymin <= ymax); }
  double width() const { return empty() ? 0.0 : xmax - xmin; }
  double height() const { return empty() ? 0.0 : ymax - ymin; }
  double area() const { return width() * height(); }

  void expand(double x, double y) {
    xmin = std::min(xmin, x);
    ymin = std::min(ymin, y);
    xmax = std::max(xmax, x);
    ymax = std::max(ymax, y);
  }
  void expand(const BBox& o) {
    if (o.empty()) return;
    expand(o.xmin, o.ymin);
    expand(o.xmax, o.ymax);
  }
  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  bool intersects(const BBox& o) const {
    return !(o.xmin > xmax || o.xmax < xmin || o.ymin > ymax || o.ymax < ymin);
  }
  BBox inflated(double d) const { return BBox{xmin - d, ymin - d, xmax + d, ymax + d}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Distance from p to the closed segment [a, b].
inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

// A polygon; hulls built by convex_hull() are counterclockwise with no
// repeated or collinear vertices. A degenerate hull holds 1 or 2 vertices
// (a point or a segment).
class Polygon2D {
 public:
  Polygon2D() = default;
  Polygon2D(std::vector<Vec2> vertices, bool convex, bool degenerate = false)
      : vertices_(std::move(vertices)), convex_(convex), degenerate_(degenerate) {}

  const std::vector<Vec2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  bool convex() const { return convex_; }
  bool degenerate() const { return degenerate_; }
  bool empty() const { return vertices_.empty(); }

  double area() const {
    if (vertices_.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0, n = vertices_.size(); i < n; ++i)
      twice += cross(vertices_[i], vertices_[(i + 1) % n]);
    return std::abs(twice) / 2.0;
  }

  // Maximum pairwise vertex distance.
  double diameter() const {
    double best = 0.0;
    for (std::size_t i = 0; i < vertices_.size(); ++i)
      for (std::size_t j = i + 1; j < vertices_.size(); ++j)
        best = std::max(best, distance(vertices_[i], vertices_[j]));
    return best;
  }

  // Smallest distance between two parallel lines enclosing the polygon. Only
  // meaningful for convex polygons; zero when degenerate.
  double min_width() const {
    const std::size_t n = vertices_.size();
    if (n < 3) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = vertices_[i];
      const Vec2 b = vertices_[(i + 1) % n];
      const double len = distance(a, b);
      if (len == 0.0) continue;
      double far = 0.0;
      for (const Vec2& v : vertices_) far = std::max(far, std::abs(orient(a, b, v)) / len);
      best = std::min(best, far);
    }
    return std::isfinite(best) ? best : 0.0;
  }

  BBox bounds() const {
    BBox b;
    for (const Vec2& v : vertices_) b.expand(v.x, v.y);
    return b;
  }

  // Minimum distance from p to the polygon outline.
  double boundary_distance(Vec2 p) const {
    if (vertices_.empty()) return std::numeric_limits<double>::infinity();
    if (vertices_.size() == 1) return distance(p, vertices_[0]);
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = vertices_.size();
    const std::size_t edges = n == 2 ? 1 : n;
    for (std::size_t i = 0; i < edges; ++i)
      best = std::min(best, segment_distance(p, vertices_[i], vertices_[(i + 1) % n]));
    return best;
  }

  // Boundary-inclusive containment with absolute tolerance `eps`.
  bool contains(Vec2 p, double eps = 1e-9) const {
    const std::size_t n = vertices_.size();
    if (n == 0) return false;
    if (n < 3) return boundary_distance(p) <= eps;
    if (convex_) {
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = vertices_[i];
        const Vec2 b = vertices_[(i + 1) % n];
        const double len = distance(a, b);
        if (orient(a, b, p) < -eps * len) return false;
      }
      return true;
    }
    if (boundary_distance(p) <= eps) return true;
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vec2 a = vertices_[i];
      const Vec2 b = vertices_[j];
      if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
        inside = !inside;
    }
    return inside;
  }

 private:
  std::vector<Vec2> vertices_;
  bool convex_ = false;
  bool degenerate_ = false;
};

// Andrew's monotone chain. Collinear and duplicate points are dropped, so a
// hull with fewer than 3 vertices is flagged degenerate.
inline Polygon2D convex_hull(std::span<const Vec2> input) {
  if (input.empty()) throw EmptyInput("convex_hull: no points");
  std::vector<Vec2> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return Polygon2D(std::move(pts), true, true);

  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) {
    // All points collinear: keep the two extremes.
    std::vector<Vec2> seg{pts.front(), pts.back()};
    return Polygon2D(std::move(seg), true, true);
  }
  return Polygon2D(std::move(hull), true, false);
}

inline Polygon2D rectangle(const BBox& b) {
  return Polygon2D({{b.xmin, b.ymin}, {b.xmax, b.ymin}, {b.xmax, b.ymax}, {b.xmin, b.ymax}}, true);
}

// Regular polygon circumscribing a circle, so the circle is fully contained.
inline Polygon2D circle_polygon(Vec2 center, double radius, int sides = 72) {
  std::vector<Vec2> v;
  v.reserve(static_cast<std::size_t>(sides));
  const double r = radius / std::cos(std::numbers::pi / sides);
  for (int i = 0; i < sides; ++i) {
    const double a = 2.0 * std::numbers::pi * i / sides;
    v.push_back({center.x + r * std::cos(a), center.y + r * std::sin(a)});
  }
  return Polygon2D(std::move(v), true);
}

}  // namespace canopy
