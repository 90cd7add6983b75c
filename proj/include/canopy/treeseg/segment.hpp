#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/core/preprocess.hpp"
#include "canopy/core/spatial_index.hpp"
#include "canopy/treeseg/profile.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::treeseg {

// Processing order of surface points: tallest first, ties by smallest (x, y).
inline bool taller_first(const Point3D& a, const Point3D& b) {
  if (a.z != b.z) return a.z > b.z;
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  return a.id < b.id;
}

inline Point3D find_gmx(const SurfacePointSet& lsps) {
  if (lsps.empty()) throw EmptyInput("find_gmx: no surface points");
  return *std::min_element(lsps.points.begin(), lsps.points.end(), taller_first);
}

struct SegmentOutcome {
  std::vector<Crown> crowns;
  std::vector<PointId> noise;       // clusters narrower than MDCW
  std::vector<PointId> low;         // clusters entirely below the minimum tree height
  std::vector<Crown> rejected;      // the noise and low clusters themselves
  std::size_t iterations = 0;
};

namespace detail {

// Noise test width: the narrowest extent of the hull, so thin slivers left
// along a crown rim do not pass as crowns.
inline double cluster_width(const Crown& c) { return c.hull.min_width(); }

inline double max_member_height(const Crown& c) {
  double h = 0.0;
  for (const Point3D& p : c.members) h = std::max(h, p.z);
  return h;
}

}  // namespace detail

// Iteratively clusters the tallest remaining crown until every surface point
// is claimed, then drops noise and low clusters. Crowns are returned in
// discovery order (non-increasing apex height) with ids 1, 2, ...
inline SegmentOutcome segment_trees_detailed(const SurfacePointSet& lsps, const SegConfig& cfg) {
  cfg.validate();
  SegmentOutcome out;
  if (lsps.empty()) return out;
  if (!(lsps.afp > 0.0)) throw InvalidInput("segment_trees: surface points need a positive AFP");
  const auto& pts = lsps.points;
  const double afp = lsps.afp;
  const double reach = std::hypot(cfg.max_profile_distance, cfg.profile_width_factor * afp);

  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return taller_first(pts[a], pts[b]); });

  const GridIndex index(pts, std::max(2.0, 4.0 * afp));
  std::vector<char> claimed(pts.size(), 0);
  std::vector<Crown> clusters;
  std::vector<ProfileCandidate> cands;

  for (std::size_t cursor = 0; cursor < order.size(); ++cursor) {
    const std::size_t gi = order[cursor];
    if (claimed[gi]) continue;
    ++out.iterations;
    const Point3D& gmx = pts[gi];

    cands.clear();
    index.for_each_in_radius(gmx.xy(), reach, [&](std::size_t j, double) {
      if (j != gi) cands.push_back(polar_candidate(gmx, pts[j], j, claimed[j] != 0));
    });
    const ProfileFan fan = adaptive_fan(gmx, gi, pts, cands, cfg, afp);

    std::vector<Vec2> outline{gmx.xy()};
    for (const BoundaryPick& b : fan.boundaries) outline.push_back(pts[b.point.index].xy());
    Polygon2D hull = convex_hull(outline);

    Crown crown;
    crown.apex = gmx;
    crown.height = gmx.z;
    if (hull.degenerate()) {
      // Too few distinct boundary points: fall back to a disk of MDCW/2.
      const double r = cfg.mdcw / 2.0;
      index.for_each_in_radius(gmx.xy(), r, [&](std::size_t j, double) {
        if (!claimed[j]) {
          claimed[j] = 1;
          crown.members.push_back(pts[j]);
        }
      });
      if (!claimed[gi]) {
        claimed[gi] = 1;
        crown.members.push_back(gmx);
      }
      hull = convex_hull(planar(crown.members));
    } else {
      const double tol = cfg.claim_tolerance_factor * afp;
      index.for_each_in_box(hull.bounds().inflated(tol), [&](std::size_t j) {
        if (!claimed[j] && hull.contains(pts[j].xy(), tol)) {
          claimed[j] = 1;
          crown.members.push_back(pts[j]);
        }
      });
      if (!claimed[gi]) {
        claimed[gi] = 1;
        crown.members.push_back(gmx);
      }
    }
    crown.hull = std::move(hull);
    for (const Point3D& p : crown.members)
      crown.max_radius = std::max(crown.max_radius, std::hypot(p.x - gmx.x, p.y - gmx.y));
    std::sort(crown.members.begin(), crown.members.end(),
              [](const Point3D& a, const Point3D& b) { return a.id < b.id; });
    clusters.push_back(std::move(crown));
  }

  for (Crown& c : clusters) {
    auto discard = [&](std::vector<PointId>& bin) {
      for (const Point3D& p : c.members) bin.push_back(p.id);
    };
    if (c.members.size() < 2 || detail::cluster_width(c) < cfg.mdcw) {
      discard(out.noise);
      out.rejected.push_back(std::move(c));
    } else if (detail::max_member_height(c) < cfg.min_tree_height) {
      discard(out.low);
      out.rejected.push_back(std::move(c));
    } else {
      c.id = out.crowns.size() + 1;
      out.crowns.push_back(std::move(c));
    }
  }
  std::sort(out.noise.begin(), out.noise.end());
  std::sort(out.low.begin(), out.low.end());
  return out;
}

inline std::vector<Crown> segment_trees(const SurfacePointSet& lsps, const SegConfig& cfg) {
  return segment_trees_detailed(lsps, cfg).crowns;
}

// Surface points ready for segmentation: highest return per AFP cell, ground
// removed, smoothed with sigma = smoothing_sigma_factor * AFP.
inline SurfacePointSet prepare_surface(const PointCloud& above_ground, const SegConfig& cfg, double afp) {
  const SurfacePointSet raw = extract_lsps(above_ground, afp);
  if (raw.empty()) return raw;
  return gaussian_smooth(raw, cfg.smoothing_sigma_factor * afp);
}

// Full single-layer pipeline on a height-normalized cloud.
inline SegmentOutcome segment_cloud(const PointCloud& above_ground, const SegConfig& cfg) {
  if (above_ground.empty()) return {};
  return segment_trees_detailed(prepare_surface(above_ground, cfg, compute_afp(above_ground)), cfg);
}

}  // namespace canopy::treeseg
