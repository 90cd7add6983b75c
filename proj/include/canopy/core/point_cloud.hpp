#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/error.hpp"

namespace canopy {

// ASPRS-style classification codes.
enum class PointClass : std::uint8_t { unclassified = 0, ground = 2, vegetation = 5 };

enum class HeightFrame : std::uint8_t { absolute, above_ground };

using PointId = std::uint64_t;

struct Point3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  PointClass cls = PointClass::unclassified;
  PointId id = 0;

  Vec2 xy() const { return {x, y}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

struct PointCloud {
  std::vector<Point3D> points;
  BBox extent;
  HeightFrame frame = HeightFrame::absolute;

  // Extent is the bounding box of the points.
  static PointCloud from_points(std::vector<Point3D> pts, HeightFrame frame = HeightFrame::absolute) {
    PointCloud c;
    for (const Point3D& p : pts) c.extent.expand(p.x, p.y);
    c.points = std::move(pts);
    c.frame = frame;
    return c;
  }

  // Explicit extent (a tile or plot footprint); grown to cover every point.
  static PointCloud with_extent(std::vector<Point3D> pts, const BBox& extent,
                                HeightFrame frame = HeightFrame::absolute) {
    PointCloud c = from_points(std::move(pts), frame);
    c.extent.expand(extent);
    return c;
  }

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    for (const Point3D& p : points) {
      if (!p.finite()) throw InvalidInput("point " + std::to_string(p.id) + " has non-finite coordinates");
      if (!extent.contains(p.x, p.y))
        throw InvalidInput("point " + std::to_string(p.id) + " lies outside the cloud extent");
    }
  }
};

// LiDAR surface points: the highest return per grid cell of width `afp`,
// heights above ground.
struct SurfacePointSet {
  std::vector<Point3D> points;
  double afp = 0.0;
  BBox extent;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Number of points per square meter of extent.
inline double point_density(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyInput("point_density: empty cloud");
  const double area = cloud.extent.area();
  if (!(area > 0.0)) throw InvalidInput("point_density: extent has zero area");
  return static_cast<double>(cloud.size()) / area;
}

// Average footprint: the characteristic spacing 1/sqrt(density).
inline double compute_afp(const PointCloud& cloud) { return 1.0 / std::sqrt(point_density(cloud)); }

inline std::vector<Vec2> planar(std::span<const Point3D> pts) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Point3D& p : pts) out.push_back(p.xy());
  return out;
}

}  // namespace canopy
