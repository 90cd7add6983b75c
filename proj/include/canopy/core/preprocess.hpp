#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "canopy/core/point_cloud.hpp"
#include "canopy/core/raster.hpp"
#include "canopy/core/spatial_index.hpp"
#include "canopy/error.hpp"

namespace canopy {

// Unclassified returns lower than this (m above ground) count as ground.
inline constexpr double kGroundEpsilon = 0.1;

inline bool is_ground(const Point3D& p, HeightFrame frame) {
  if (p.cls == PointClass::ground) return true;
  return frame == HeightFrame::above_ground && p.cls == PointClass::unclassified && p.z < kGroundEpsilon;
}

struct NormalizeResult {
  PointCloud cloud;
  std::size_t outside_dem = 0;  // points that took a clamped border elevation
};

// Replaces absolute elevations with heights above the DEM, clamped at 0.
inline NormalizeResult normalize_heights(const PointCloud& cloud, const Dem& dem) {
  if (cloud.frame != HeightFrame::absolute) throw InvalidInput("normalize_heights: cloud is already height-normalized");
  NormalizeResult out;
  out.cloud.extent = cloud.extent;
  out.cloud.frame = HeightFrame::above_ground;
  out.cloud.points.reserve(cloud.size());
  const BBox dem_box = dem.extent();
  for (const Point3D& p : cloud.points) {
    if (!dem_box.contains(p.x, p.y)) ++out.outside_dem;
    Point3D q = p;
    q.z = std::max(0.0, p.z - dem.elevation_at(p.x, p.y));
    out.cloud.points.push_back(q);
  }
  return out;
}

// Drops ground returns (by class or by the height threshold).
inline PointCloud remove_ground(const PointCloud& cloud) {
  PointCloud out;
  out.extent = cloud.extent;
  out.frame = cloud.frame;
  for (const Point3D& p : cloud.points)
    if (!is_ground(p, cloud.frame)) out.points.push_back(p);
  return out;
}

// Keeps the highest return of every grid cell, then removes the ground ones,
// leaving gaps. Output is ordered by cell index.
inline SurfacePointSet extract_lsps(const PointCloud& cloud, double cell_width) {
  if (!(cell_width > 0.0)) throw InvalidInput("extract_lsps: cell width must be positive");
  if (cloud.frame != HeightFrame::above_ground) throw InvalidInput("extract_lsps: cloud must be height-normalized");
  SurfacePointSet out;
  out.afp = cell_width;
  out.extent = cloud.extent;
  if (cloud.empty()) return out;
  BBox extent = cloud.extent;
  if (extent.empty()) extent = PointCloud::from_points(cloud.points).extent;

  auto best = RasterGrid<long>::covering(extent, cell_width, -1L);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3D& p = cloud.points[i];
    long& slot = best[best.linear_of(p.x, p.y)];
    if (slot < 0) {
      slot = static_cast<long>(i);
      continue;
    }
    const Point3D& q = cloud.points[static_cast<std::size_t>(slot)];
    if (p.z > q.z || (p.z == q.z && p.id < q.id)) slot = static_cast<long>(i);
  }
  for (long slot : best.cells()) {
    if (slot < 0) continue;
    const Point3D& p = cloud.points[static_cast<std::size_t>(slot)];
    if (!is_ground(p, HeightFrame::above_ground)) out.points.push_back(p);
  }
  return out;
}

// Global cell of a point on a grid of width `w` anchored at `origin`.
inline std::pair<std::int64_t, std::int64_t> aligned_cell(const Point3D& p, Vec2 origin, double w) {
  return {static_cast<std::int64_t>(std::floor((p.x - origin.x) / w)),
          static_cast<std::int64_t>(std::floor((p.y - origin.y) / w))};
}

// extract_lsps on an unbounded grid anchored at `origin`, so clouds cut from
// the same block agree cell for cell. Output is ordered by (row, col).
inline SurfacePointSet extract_lsps_aligned(const PointCloud& cloud, double cell_width, Vec2 origin) {
  if (!(cell_width > 0.0)) throw InvalidInput("extract_lsps: cell width must be positive");
  if (cloud.frame != HeightFrame::above_ground) throw InvalidInput("extract_lsps: cloud must be height-normalized");
  SurfacePointSet out;
  out.afp = cell_width;
  out.extent = cloud.extent;
  if (cloud.empty()) return out;
  std::int64_t c0 = INT64_MAX, r0 = INT64_MAX, c1 = INT64_MIN, r1 = INT64_MIN;
  for (const Point3D& p : cloud.points) {
    const auto [col, row] = aligned_cell(p, origin, cell_width);
    c0 = std::min(c0, col), c1 = std::max(c1, col), r0 = std::min(r0, row), r1 = std::max(r1, row);
  }
  const auto ncols = static_cast<std::size_t>(c1 - c0 + 1), nrows = static_cast<std::size_t>(r1 - r0 + 1);
  std::vector<long> best(ncols * nrows, -1L);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3D& p = cloud.points[i];
    const auto [col, row] = aligned_cell(p, origin, cell_width);
    long& slot = best[static_cast<std::size_t>(row - r0) * ncols + static_cast<std::size_t>(col - c0)];
    if (slot < 0) {
      slot = static_cast<long>(i);
      continue;
    }
    const Point3D& q = cloud.points[static_cast<std::size_t>(slot)];
    if (p.z > q.z || (p.z == q.z && p.id < q.id)) slot = static_cast<long>(i);
  }
  for (long slot : best) {
    if (slot < 0) continue;
    const Point3D& p = cloud.points[static_cast<std::size_t>(slot)];
    if (!is_ground(p, HeightFrame::above_ground)) out.points.push_back(p);
  }
  return out;
}

// Replaces each height by the Gaussian-weighted mean of neighbors within 3
// sigma (weights renormalized over the truncated support).
inline SurfacePointSet gaussian_smooth(const SurfacePointSet& lsps, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("gaussian_smooth: sigma must be positive");
  SurfacePointSet out = lsps;
  if (lsps.empty()) return out;
  const double radius = 3.0 * sigma;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const GridIndex index(lsps.points, radius);
  for (std::size_t i = 0; i < lsps.size(); ++i) {
    double wsum = 0.0, zsum = 0.0;
    index.for_each_in_radius(lsps.points[i].xy(), radius, [&](std::size_t j, double d2) {
      const double w = std::exp(-d2 * inv2s2);
      wsum += w;
      zsum += w * lsps.points[j].z;
    });
    out.points[i].z = zsum / wsum;
  }
  return out;
}

}  // namespace canopy
