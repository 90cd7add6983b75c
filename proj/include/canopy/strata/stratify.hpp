#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/core/raster.hpp"
#include "canopy/core/spatial_index.hpp"
#include "canopy/core/stats.hpp"
#include "canopy/error.hpp"

namespace canopy::strata {

struct StrataConfig {
  double locale_radius_factor = 6.0;  // x AFP
  double locale_radius_floor = 1.5;   // m
  double histogram_bin = 0.5;         // m
  double kernel_sigma = 5.0;          // m
  double min_layer_top = 4.0;         // m
  std::size_t min_remaining_points = 50;
  int threads = 1;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw InvalidInput(std::string("StrataConfig: ") + name + " must be positive");
    };
    positive(locale_radius_factor, "locale_radius_factor");
    positive(locale_radius_floor, "locale_radius_floor");
    positive(histogram_bin, "histogram_bin");
    positive(kernel_sigma, "kernel_sigma");
    positive(min_layer_top, "min_layer_top");
    if (min_remaining_points == 0) throw InvalidInput("StrataConfig: min_remaining_points must be positive");
    if (threads < 1) throw InvalidInput("StrataConfig: threads must be >= 1");
  }

  double locale_radius(double afp) const { return std::max(locale_radius_factor * afp, locale_radius_floor); }
};

// Bin k counts heights in [k * bin, (k + 1) * bin); negative heights land in bin 0.
struct HeightHistogram {
  double bin = 0.5;
  std::vector<double> counts;

  double center(std::size_t k) const { return (static_cast<double>(k) + 0.5) * bin; }
  double total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
  }
};

struct HeightRange {
  double bottom = 0.0;
  double top = 0.0;
};

inline std::size_t height_bin(double z, double bin, std::size_t nbins) {
  if (!(z > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(z / bin), nbins - 1);
}

inline HeightHistogram empty_histogram(double bin, std::size_t nbins) {
  return {bin, std::vector<double>(std::max<std::size_t>(nbins, 1), 0.0)};
}

// Histogram of the points within `radius` (inclusive) of center.
inline HeightHistogram locale_histogram(std::span<const Point3D> pts, Vec2 center, double radius, double bin,
                                        std::size_t nbins) {
  if (!(radius > 0.0) || !(bin > 0.0)) throw InvalidInput("locale_histogram: radius and bin must be positive");
  HeightHistogram h = empty_histogram(bin, nbins);
  const double r2 = radius * radius;
  for (const Point3D& p : pts) {
    const double dx = p.x - center.x, dy = p.y - center.y;
    if (dx * dx + dy * dy <= r2) h.counts[height_bin(p.z, bin, h.counts.size())] += 1.0;
  }
  return h;
}

// Bins span 0 up to the tallest point of the cloud.
inline HeightHistogram locale_histogram(const PointCloud& cloud, Vec2 center, double radius, double bin) {
  double top = 0.0;
  for (const Point3D& p : cloud.points) top = std::max(top, p.z);
  return locale_histogram(cloud.points, center, radius, bin, static_cast<std::size_t>(top / bin) + 1);
}

// Gaussian smoothing over the whole histogram. The kernel is not truncated
// (a cut-off tail puts a concave kink 3 sigma away from every mode) and is
// renormalized over the taps that fall inside, so a flat histogram stays flat.
inline std::vector<double> smooth_histogram(const HeightHistogram& h, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("smooth_histogram: sigma must be positive");
  const double s = sigma / h.bin;
  const auto n = static_cast<long>(h.counts.size());
  std::vector<double> kernel(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) kernel[static_cast<std::size_t>(k)] = std::exp(-0.5 * (static_cast<double>(k) * k) / (s * s));
  std::vector<double> out(h.counts.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    double acc = 0.0, wsum = 0.0;
    for (long j = 0; j < n; ++j) {
      const double w = kernel[static_cast<std::size_t>(std::abs(i - j))];
      acc += w * h.counts[static_cast<std::size_t>(j)];
      wsum += w;
    }
    out[static_cast<std::size_t>(i)] = acc / wsum;
  }
  return out;
}

inline constexpr double kConcavityTolerance = 1e-9;

// Maximal height ranges where the smoothed histogram is strictly concave,
// tallest first. Range ends are bin centers.
inline std::vector<HeightRange> salient_layers(const HeightHistogram& h, double sigma) {
  if (h.counts.empty()) throw InvalidInput("salient_layers: empty histogram");
  std::vector<HeightRange> ranges;
  if (h.total() <= 0.0 || h.counts.size() < 3) return ranges;
  const std::vector<double> s = smooth_histogram(h, sigma);
  const double b2 = h.bin * h.bin;
  std::optional<std::size_t> start;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double d2 = (s[i - 1] - 2.0 * s[i] + s[i + 1]) / b2;
    const bool concave = d2 < -kConcavityTolerance;
    if (concave && !start) start = i;
    if (!concave && start) {
      ranges.push_back({h.center(*start), h.center(i - 1)});
      start.reset();
    }
  }
  if (start) ranges.push_back({h.center(*start), h.center(s.size() - 2)});
  std::reverse(ranges.begin(), ranges.end());
  return ranges;
}

// Midpoint between the bottom of the top range and the top of the next one.
inline std::optional<double> top_layer_threshold(std::span<const HeightRange> ranges) {
  if (ranges.size() < 2) return std::nullopt;
  return (ranges[0].bottom + ranges[1].top) / 2.0;
}

struct CanopyLayer {
  int index = 1;  // 1 = overstory
  PointCloud points;
  double starting_height = 0.0;  // median over contributing cells
  double thickness = 0.0;        // median over contributing cells
  double density = 0.0;          // points per m2 of the stratified extent
};

// Per-cell outcome of one stripping pass.
struct CellThreshold {
  CellIndex cell;
  std::optional<double> threshold;
  double range_top = 0.0;  // top of the highest salient range (or tallest point)
};

struct StripPass {
  double afp = 0.0;
  double locale_radius = 0.0;
  std::size_t ncols = 0;
  std::size_t nrows = 0;
  std::vector<CellThreshold> cells;  // non-empty cells only, in grid order
};

struct StratifyOutcome {
  std::vector<CanopyLayer> layers;
  std::vector<Point3D> below_top;  // layers lying entirely under min_layer_top
  std::vector<Point3D> remainder;  // left when stripping stopped
  std::vector<StripPass> passes;
};

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

inline double max_height(std::span<const Point3D> pts) {
  double top = 0.0;
  for (const Point3D& p : pts) top = std::max(top, p.z);
  return top;
}

}  // namespace detail

// Strips canopy layers from the top down until fewer than
// min_remaining_points are left. AFP is recomputed every pass from the
// remainder over the cloud's extent.
inline StratifyOutcome stratify_detailed(const PointCloud& cloud, const StrataConfig& cfg) {
  cfg.validate();
  StratifyOutcome out;
  if (cloud.empty()) return out;
  const BBox extent = cloud.extent;
  const double area = extent.area();
  if (!(area > 0.0)) throw InvalidInput("stratify: cloud extent has zero area");

  std::vector<Point3D> rest = cloud.points;
  int next_index = 1;
  while (rest.size() >= cfg.min_remaining_points) {
    const double afp = 1.0 / std::sqrt(static_cast<double>(rest.size()) / area);
    // Locales this sparse hold no vertical structure.
    if (afp > 10.0 * cfg.locale_radius_floor) break;
    StripPass pass;
    pass.afp = afp;
    pass.locale_radius = cfg.locale_radius(afp);

    const auto grid = bin_points(rest, extent, afp);
    pass.ncols = grid.ncols();
    pass.nrows = grid.nrows();
    const std::size_t nbins =
        static_cast<std::size_t>((detail::max_height(rest) + 3.0 * cfg.kernel_sigma) / cfg.histogram_bin) + 1;
    const GridIndex index(rest, std::max(pass.locale_radius, afp));

    std::vector<std::size_t> occupied;
    for (std::size_t i = 0; i < grid.cell_count(); ++i)
      if (!grid[i].empty()) occupied.push_back(i);
    pass.cells.resize(occupied.size());
    detail::parallel_for(occupied.size(), cfg.threads, [&](std::size_t k) {
      const CellIndex cell = grid.unlinear(occupied[k]);
      HeightHistogram h = empty_histogram(cfg.histogram_bin, nbins);
      index.for_each_in_radius(grid.cell_center(cell), pass.locale_radius, [&](std::size_t j, double) {
        h.counts[height_bin(rest[j].z, h.bin, nbins)] += 1.0;
      });
      const std::vector<HeightRange> ranges = salient_layers(h, cfg.kernel_sigma);
      CellThreshold ct{cell, top_layer_threshold(ranges), 0.0};
      if (!ranges.empty()) {
        ct.range_top = ranges.front().top;
      } else {
        for (std::size_t j : grid[occupied[k]]) ct.range_top = std::max(ct.range_top, rest[j].z);
      }
      pass.cells[k] = ct;
    });

    std::vector<char> take(rest.size(), 0);
    std::vector<double> starts, thicknesses;
    std::size_t taken = 0;
    for (std::size_t k = 0; k < occupied.size(); ++k) {
      const CellThreshold& ct = pass.cells[k];
      double lowest = INFINITY;
      for (std::size_t j : grid[occupied[k]])
        if (!ct.threshold || rest[j].z >= *ct.threshold) {
          take[j] = 1;
          ++taken;
          lowest = std::min(lowest, rest[j].z);
        }
      if (!std::isfinite(lowest)) continue;
      const double start = ct.threshold.value_or(lowest);
      starts.push_back(start);
      thicknesses.push_back(std::max(0.0, ct.range_top - start));
    }
    if (taken == 0) {
      // No cell yields points above its threshold: the remainder is one layer.
      std::fill(take.begin(), take.end(), 1);
      taken = rest.size();
      const double lo = std::min_element(rest.begin(), rest.end(), [](auto& a, auto& b) { return a.z < b.z; })->z;
      starts.assign(1, lo);
      thicknesses.assign(1, detail::max_height(rest) - lo);
    }

    std::vector<Point3D> layer_pts, left;
    layer_pts.reserve(taken);
    left.reserve(rest.size() - taken);
    for (std::size_t j = 0; j < rest.size(); ++j) (take[j] ? layer_pts : left).push_back(rest[j]);
    rest = std::move(left);
    out.passes.push_back(std::move(pass));

    if (detail::max_height(layer_pts) < cfg.min_layer_top) {
      out.below_top.insert(out.below_top.end(), layer_pts.begin(), layer_pts.end());
      continue;
    }
    CanopyLayer layer;
    layer.index = next_index++;
    layer.density = static_cast<double>(layer_pts.size()) / area;
    layer.points = PointCloud::with_extent(std::move(layer_pts), extent, cloud.frame);
    layer.starting_height = stats::median(std::move(starts));
    layer.thickness = stats::median(std::move(thicknesses));
    out.layers.push_back(std::move(layer));
  }
  out.remainder = std::move(rest);
  return out;
}

inline std::vector<CanopyLayer> stratify(const PointCloud& cloud, const StrataConfig& cfg) {
  return stratify_detailed(cloud, cfg).layers;
}

struct LayerRow {
  std::string label;  // layer index, or "all"
  std::size_t points = 0;
  double starting_height = 0.0;
  double thickness = 0.0;
  double density = 0.0;
};

// One row per layer plus an aggregate: lowest start, span up to the highest
// layer top, summed density.
inline std::vector<LayerRow> layer_stats(std::span<const CanopyLayer> layers) {
  std::vector<LayerRow> rows;
  if (layers.empty()) return rows;
  LayerRow all{"all", 0, INFINITY, 0.0, 0.0};
  double top = -INFINITY;
  for (const CanopyLayer& l : layers) {
    rows.push_back({std::to_string(l.index), l.points.size(), l.starting_height, l.thickness, l.density});
    all.points += l.points.size();
    all.starting_height = std::min(all.starting_height, l.starting_height);
    top = std::max(top, l.starting_height + l.thickness);
    all.density += l.density;
  }
  all.thickness = top - all.starting_height;
  rows.push_back(all);
  return rows;
}

}  // namespace canopy::strata
