#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/core/stats.hpp"
#include "canopy/treeseg/crown_model.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::treeseg {

// A surface point near the GMX, in polar coordinates around it.
// A blocking candidate belongs to an already delineated crown: the profile
// ends just before it.
struct ProfileCandidate {
  double distance = 0.0;
  double angle_deg = 0.0;  // [0, 360)
  std::size_t index = 0;
  bool blocking = false;
};

inline ProfileCandidate polar_candidate(const Point3D& gmx, const Point3D& p, std::size_t index,
                                        bool blocking = false) {
  const double dx = p.x - gmx.x, dy = p.y - gmx.y;
  double a = degrees(std::atan2(dy, dx));
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a -= 360.0;
  return {std::hypot(dx, dy), a, index, blocking};
}

// Lays `count` rays from the GMX every 360/count degrees and assigns each
// candidate to its angularly nearest ray when it falls inside that ray's band.
// A ray stops at its first blocking candidate.
inline std::vector<Profile> build_profiles(const Point3D& gmx, std::size_t gmx_index, std::span<const Point3D> pts,
                                           std::span<const ProfileCandidate> candidates, int count, double width,
                                           double max_distance) {
  std::vector<Profile> profiles(static_cast<std::size_t>(count));
  std::vector<double> stop(static_cast<std::size_t>(count), max_distance);
  const double step = 360.0 / count;
  for (int k = 0; k < count; ++k) {
    Profile& p = profiles[static_cast<std::size_t>(k)];
    p.azimuth = step * k;
    p.width = width;
    p.points.push_back({0.0, gmx.z, gmx_index, gmx.id});
  }
  const double half = width / 2.0;
  for (const ProfileCandidate& c : candidates) {
    if (c.distance <= 0.0) continue;
    const long k = std::lround(c.angle_deg / step) % count;
    const double delta = radians(c.angle_deg - step * static_cast<double>(k));
    const double along = c.distance * std::cos(delta);
    const double perp = std::abs(c.distance * std::sin(delta));
    if (along <= 0.0 || along > max_distance || perp > half) continue;
    const auto ray = static_cast<std::size_t>(k);
    if (c.blocking) {
      stop[ray] = std::min(stop[ray], along);
      continue;
    }
    const Point3D& q = pts[c.index];
    profiles[ray].points.push_back({along, q.z, c.index, q.id});
  }
  for (std::size_t ray = 0; ray < profiles.size(); ++ray) {
    Profile& p = profiles[ray];
    std::erase_if(p.points, [&](const ProfilePoint& q) { return q.distance >= stop[ray]; });
    std::sort(p.points.begin() + 1, p.points.end(), [](const ProfilePoint& a, const ProfilePoint& b) {
      return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    // Distances must be strictly increasing.
    auto last = std::unique(p.points.begin(), p.points.end(),
                            [](const ProfilePoint& a, const ProfilePoint& b) { return a.distance == b.distance; });
    p.points.erase(last, p.points.end());
  }
  return profiles;
}

inline std::vector<double> sqrt_spacings(const Profile& profile) {
  std::vector<double> t;
  const auto& pts = profile.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) t.push_back(std::sqrt(pts[i + 1].distance - pts[i].distance));
  return t;
}

// Q3 + factor * IQR of square-root spacings; nullopt below 8 spacings.
inline std::optional<double> gap_threshold(const std::vector<double>& t, const SegConfig& cfg) {
  if (t.size() < 8) return std::nullopt;
  const double q1 = stats::quantile(t, 0.25);
  const double q3 = stats::quantile(t, 0.75);
  // Slack absorbs rounding in nominally equal spacings.
  return q3 + cfg.gap_iqr_factor * (q3 - q1) + 1e-9;
}

inline std::optional<std::size_t> truncate_at_gap(Profile& profile, double threshold) {
  const std::vector<double> t = sqrt_spacings(profile);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > threshold) {
      profile.points.resize(i + 1);
      return i;
    }
  return std::nullopt;
}

// Finds the first inter-tree gap: a square-root-transformed spacing above
// Q3 + factor * IQR. Truncates the profile after the gap and returns the
// index of the last point kept; nullopt when there is no gap or fewer than 8
// spacings.
inline std::optional<std::size_t> detect_gap(Profile& profile, const SegConfig& cfg) {
  const auto threshold = gap_threshold(sqrt_spacings(profile), cfg);
  if (!threshold) return std::nullopt;
  return truncate_at_gap(profile, *threshold);
}

// Gap detection over a whole fan. Profiles too short for their own statistics
// use the threshold pooled from every profile of the fan, and never bridge a
// void wider than MDCW.
inline void detect_gaps(std::vector<Profile>& profiles, const SegConfig& cfg) {
  std::vector<double> pooled;
  for (const Profile& p : profiles) {
    const std::vector<double> t = sqrt_spacings(p);
    pooled.insert(pooled.end(), t.begin(), t.end());
  }
  const double cap = std::sqrt(cfg.mdcw);
  const double shared = std::min(gap_threshold(pooled, cfg).value_or(cap), cap);
  for (Profile& p : profiles) {
    if (detect_gap(p, cfg) || p.points.size() >= 9) continue;
    truncate_at_gap(p, shared);
  }
}

inline double slope(const ProfilePoint& a, const ProfilePoint& b) {
  return (b.height - a.height) / (b.distance - a.distance);
}

struct BoundaryPick {
  std::size_t index = 0;
  ProfilePoint point;
};

// Steepness right of the local minimum at `lm`: arctan of the median absolute
// slope over consecutive pairs within MDCW, clamped to the sphere..cone range.
inline double right_steepness(const Profile& profile, std::size_t lm, const SegConfig& cfg) {
  const auto& pts = profile.points;
  std::vector<double> s;
  for (std::size_t j = lm; j + 1 < pts.size() && pts[j + 1].distance <= pts[lm].distance + cfg.mdcw; ++j)
    s.push_back(std::abs(slope(pts[j], pts[j + 1])));
  if (s.size() < 2) return kSphereExpectedSlopeDeg;
  const double deg = degrees(std::atan(stats::median(std::move(s))));
  return std::clamp(deg, kSphereExpectedSlopeDeg, 90.0 - cfg.epsilon_deg);
}

// Tests whether the local minimum at `lm` separates the current crown from an
// adjacent, shorter one.
inline bool is_crown_boundary(const Profile& profile, std::size_t lm, const SegConfig& cfg) {
  const auto& pts = profile.points;
  std::vector<double> left;
  for (std::size_t j = 0; j < lm; ++j) left.push_back(slope(pts[j], pts[j + 1]));
  if (stats::median(std::move(left)) >= 0.0) return false;

  const double h_ad = (pts.front().height + pts[lm].height) / 2.0;
  const double window = right_window_width(right_steepness(profile, lm, cfg), h_ad, cfg);
  std::vector<double> right{slope(pts[lm], pts[lm + 1])};
  for (std::size_t j = lm + 1; j + 1 < pts.size() && pts[j + 1].distance <= pts[lm].distance + window; ++j)
    right.push_back(slope(pts[j], pts[j + 1]));
  return stats::median(std::move(right)) > 0.0;
}

// Scans local minima outward from the GMX; the first one passing the
// boundary test is the crown boundary, otherwise the last point is.
inline BoundaryPick identify_boundary(const Profile& profile, const SegConfig& cfg) {
  const auto& pts = profile.points;
  if (pts.empty()) throw EmptyInput("identify_boundary: empty profile");
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const bool lm = pts[i].height < pts[i - 1].height && pts[i].height < pts[i + 1].height;
    if (lm && is_crown_boundary(profile, i, cfg)) return {i, pts[i]};
  }
  return {pts.size() - 1, pts.back()};
}

struct ProfileFan {
  std::vector<Profile> profiles;            // gap-trimmed
  std::vector<BoundaryPick> boundaries;     // one per profile
  double max_radius = 0.0;                  // largest GMX-to-boundary distance
};

// Generates profiles around the GMX, doubling their number while the chord
// height at the current maximum crown radius exceeds the footprint.
inline ProfileFan adaptive_fan(const Point3D& gmx, std::size_t gmx_index, std::span<const Point3D> pts,
                               std::span<const ProfileCandidate> candidates, const SegConfig& cfg, double afp) {
  const double width = cfg.profile_width_factor * afp;
  int count = cfg.initial_profiles;
  for (;;) {
    ProfileFan fan;
    fan.profiles = build_profiles(gmx, gmx_index, pts, candidates, count, width, cfg.max_profile_distance);
    detect_gaps(fan.profiles, cfg);
    for (Profile& p : fan.profiles) {
      const BoundaryPick b = identify_boundary(p, cfg);
      const Point3D& q = pts[b.point.index];
      fan.max_radius = std::max(fan.max_radius, std::hypot(q.x - gmx.x, q.y - gmx.y));
      fan.boundaries.push_back(b);
    }
    if (count * 2 > cfg.max_profiles || chord_height(fan.max_radius, 360.0 / count) <= afp) return fan;
    count *= 2;
  }
}

// Profiles around `gmx`, which must be a member of `lsps`.
inline ProfileFan generate_profiles(const Point3D& gmx, const SurfacePointSet& lsps, const SegConfig& cfg) {
  const auto it = std::find_if(lsps.points.begin(), lsps.points.end(), [&](const Point3D& p) { return p.id == gmx.id; });
  if (it == lsps.points.end()) throw InvalidInput("generate_profiles: GMX is not a member of the surface points");
  const std::size_t gmx_index = static_cast<std::size_t>(it - lsps.points.begin());
  const double reach = std::hypot(cfg.max_profile_distance, cfg.profile_width_factor * lsps.afp);
  std::vector<ProfileCandidate> cands;
  for (std::size_t i = 0; i < lsps.size(); ++i) {
    if (i == gmx_index) continue;
    const ProfileCandidate c = polar_candidate(gmx, lsps.points[i], i);
    if (c.distance <= reach) cands.push_back(c);
  }
  return adaptive_fan(gmx, gmx_index, lsps.points, cands, cfg, lsps.afp);
}

}  // namespace canopy::treeseg
