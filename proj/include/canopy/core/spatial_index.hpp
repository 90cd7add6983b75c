#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "canopy/core/point_cloud.hpp"
#include "canopy/core/raster.hpp"

namespace canopy {

// Uniform bucket grid over a fixed point array for radius and box queries.
// Holds indices into the span it was built from; the span must outlive it.
class GridIndex {
 public:
  GridIndex(std::span<const Point3D> pts, double bucket_width) : pts_(pts) {
    BBox box;
    for (const Point3D& p : pts) box.expand(p.x, p.y);
    if (box.empty()) box = BBox::of(0, 0, bucket_width, bucket_width);
    grid_ = RasterGrid<std::vector<std::size_t>>::covering(box, bucket_width);
    for (std::size_t i = 0; i < pts.size(); ++i) grid_[grid_.linear_of(pts[i].x, pts[i].y)].push_back(i);
  }

  std::span<const Point3D> points() const { return pts_; }

  // Calls fn(index) for every point inside the closed box.
  template <typename Fn>
  void for_each_in_box(const BBox& box, Fn&& fn) const {
    if (box.empty()) return;
    const CellIndex lo = grid_.cell_of(box.xmin, box.ymin);
    const CellIndex hi = grid_.cell_of(box.xmax, box.ymax);
    for (std::size_t r = lo.row; r <= hi.row; ++r)
      for (std::size_t c = lo.col; c <= hi.col; ++c)
        for (std::size_t i : grid_.at({c, r})) {
          const Point3D& p = pts_[i];
          if (box.contains(p.x, p.y)) fn(i);
        }
  }

  // Calls fn(index, squared_distance) for every point within `radius` of center.
  template <typename Fn>
  void for_each_in_radius(Vec2 center, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    for_each_in_box(BBox::of(center.x - radius, center.y - radius, center.x + radius, center.y + radius),
                    [&](std::size_t i) {
                      const double dx = pts_[i].x - center.x, dy = pts_[i].y - center.y;
                      const double d2 = dx * dx + dy * dy;
                      if (d2 <= r2) fn(i, d2);
                    });
  }

 private:
  std::span<const Point3D> pts_;
  RasterGrid<std::vector<std::size_t>> grid_;
};

}  // namespace canopy
