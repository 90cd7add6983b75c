#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/error.hpp"

namespace canopy {

struct CellIndex {
  std::size_t col = 0;
  std::size_t row = 0;
  friend bool operator==(CellIndex, CellIndex) = default;
};

// Regular grid anchored at the south-west corner. Row 0 is the southernmost
// row. Binning is half-open: a coordinate on a shared cell border falls in the
// cell with the larger index; coordinates outside the grid clamp to the
// nearest border cell, so the mapping is total.
template <typename T>
class RasterGrid {
 public:
  RasterGrid() = default;
  RasterGrid(Vec2 origin, double cell_width, std::size_t ncols, std::size_t nrows, T fill = T{})
      : origin_(origin), cell_width_(cell_width), ncols_(ncols), nrows_(nrows), cells_(ncols * nrows, fill) {
    if (!(cell_width > 0.0)) throw InvalidInput("RasterGrid: cell width must be positive");
    if (ncols == 0 || nrows == 0) throw InvalidInput("RasterGrid: grid must have at least one cell");
  }

  // Smallest grid of the given cell width covering `extent`.
  static RasterGrid covering(const BBox& extent, double cell_width, T fill = T{}) {
    if (!(cell_width > 0.0)) throw InvalidInput("RasterGrid: cell width must be positive");
    if (extent.empty()) throw InvalidInput("RasterGrid: empty extent");
    const auto count = [&](double span) {
      const double n = std::ceil(span / cell_width - 1e-9);
      return static_cast<std::size_t>(std::max(1.0, n));
    };
    return RasterGrid({extent.xmin, extent.ymin}, cell_width, count(extent.width()), count(extent.height()), fill);
  }

  Vec2 origin() const { return origin_; }
  double cell_width() const { return cell_width_; }
  std::size_t ncols() const { return ncols_; }
  std::size_t nrows() const { return nrows_; }
  std::size_t cell_count() const { return cells_.size(); }

  BBox extent() const {
    return BBox::of(origin_.x, origin_.y, origin_.x + cell_width_ * static_cast<double>(ncols_),
                    origin_.y + cell_width_ * static_cast<double>(nrows_));
  }

  CellIndex cell_of(double x, double y) const { return {axis_index(x - origin_.x, ncols_), axis_index(y - origin_.y, nrows_)}; }
  std::size_t linear(CellIndex c) const { return c.row * ncols_ + c.col; }
  std::size_t linear_of(double x, double y) const { return linear(cell_of(x, y)); }
  CellIndex unlinear(std::size_t i) const { return {i % ncols_, i / ncols_}; }

  Vec2 cell_center(CellIndex c) const {
    return {origin_.x + (static_cast<double>(c.col) + 0.5) * cell_width_,
            origin_.y + (static_cast<double>(c.row) + 0.5) * cell_width_};
  }

  T& operator[](std::size_t i) { return cells_[i]; }
  const T& operator[](std::size_t i) const { return cells_[i]; }
  T& at(CellIndex c) { return cells_[linear(c)]; }
  const T& at(CellIndex c) const { return cells_[linear(c)]; }
  std::vector<T>& cells() { return cells_; }
  const std::vector<T>& cells() const { return cells_; }

 private:
  std::size_t axis_index(double offset, std::size_t n) const {
    const double f = std::floor(offset / cell_width_);
    if (!(f > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(f), n - 1);
  }

  Vec2 origin_{};
  double cell_width_ = 1.0;
  std::size_t ncols_ = 0;
  std::size_t nrows_ = 0;
  std::vector<T> cells_;
};

// Bins point indices into a grid.
inline RasterGrid<std::vector<std::size_t>> bin_points(std::span<const Point3D> pts, const BBox& extent,
                                                       double cell_width) {
  auto grid = RasterGrid<std::vector<std::size_t>>::covering(extent, cell_width);
  for (std::size_t i = 0; i < pts.size(); ++i) grid[grid.linear_of(pts[i].x, pts[i].y)].push_back(i);
  return grid;
}

// Ground elevation raster.
class Dem {
 public:
  static constexpr double kDefaultNodata = -9999.0;

  Dem() = default;
  explicit Dem(RasterGrid<double> grid, double nodata = kDefaultNodata) : grid_(std::move(grid)), nodata_(nodata) {}

  const RasterGrid<double>& grid() const { return grid_; }
  RasterGrid<double>& grid() { return grid_; }
  double nodata() const { return nodata_; }
  double resolution() const { return grid_.cell_width(); }
  BBox extent() const { return grid_.extent(); }
  bool is_void(std::size_t i) const { return grid_[i] == nodata_ || !std::isfinite(grid_[i]); }

  // Fills void cells from the nearest filled cell (8-connected breadth-first
  // order). Throws when every cell is void.
  void fill_voids() {
    const std::size_t nc = grid_.ncols(), nr = grid_.nrows();
    std::deque<std::size_t> frontier;
    std::vector<char> filled(grid_.cell_count(), 0);
    for (std::size_t i = 0; i < grid_.cell_count(); ++i)
      if (!is_void(i)) {
        filled[i] = 1;
        frontier.push_back(i);
      }
    if (frontier.empty()) throw EmptyInput("Dem: no filled cells");
    while (!frontier.empty()) {
      const std::size_t i = frontier.front();
      frontier.pop_front();
      const CellIndex c = grid_.unlinear(i);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const long r = static_cast<long>(c.row) + dr, col = static_cast<long>(c.col) + dc;
          if (r < 0 || col < 0 || r >= static_cast<long>(nr) || col >= static_cast<long>(nc)) continue;
          const std::size_t j = static_cast<std::size_t>(r) * nc + static_cast<std::size_t>(col);
          if (filled[j]) continue;
          filled[j] = 1;
          grid_[j] = grid_[i];
          frontier.push_back(j);
        }
    }
  }

  // Bilinear interpolation between cell centers. Queries outside the center
  // lattice clamp to the nearest border cell.
  double elevation_at(double x, double y) const {
    const double w = grid_.cell_width();
    const double fx = std::clamp((x - grid_.origin().x) / w - 0.5, 0.0, static_cast<double>(grid_.ncols() - 1));
    const double fy = std::clamp((y - grid_.origin().y) / w - 0.5, 0.0, static_cast<double>(grid_.nrows() - 1));
    const std::size_t c0 = static_cast<std::size_t>(fx), r0 = static_cast<std::size_t>(fy);
    const std::size_t c1 = std::min(c0 + 1, grid_.ncols() - 1), r1 = std::min(r0 + 1, grid_.nrows() - 1);
    const double tx = fx - static_cast<double>(c0), ty = fy - static_cast<double>(r0);
    const double z00 = grid_.at({c0, r0}), z10 = grid_.at({c1, r0});
    const double z01 = grid_.at({c0, r1}), z11 = grid_.at({c1, r1});
    return (1 - ty) * ((1 - tx) * z00 + tx * z10) + ty * ((1 - tx) * z01 + tx * z11);
  }

 private:
  RasterGrid<double> grid_;
  double nodata_ = kDefaultNodata;
};

// Per-cell mean of ground returns; empty cells take the nearest filled value.
inline Dem build_dem(const PointCloud& ground, double resolution) {
  if (ground.empty()) throw EmptyInput("build_dem: no ground points");
  if (!(resolution > 0.0)) throw InvalidInput("build_dem: resolution must be positive");
  BBox extent = ground.extent;
  if (extent.empty()) extent = PointCloud::from_points(ground.points).extent;
  auto sums = RasterGrid<std::pair<double, std::size_t>>::covering(extent, resolution);
  for (const Point3D& p : ground.points) {
    auto& s = sums[sums.linear_of(p.x, p.y)];
    s.first += p.z;
    ++s.second;
  }
  RasterGrid<double> g(sums.origin(), resolution, sums.ncols(), sums.nrows(), Dem::kDefaultNodata);
  for (std::size_t i = 0; i < g.cell_count(); ++i)
    if (sums[i].second > 0) g[i] = sums[i].first / static_cast<double>(sums[i].second);
  Dem dem(std::move(g));
  dem.fill_voids();
  return dem;
}

}  // namespace canopy
