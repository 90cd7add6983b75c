#pragma once

#include <algorithm>
#include <cmath>

#include "canopy/core/geometry.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::treeseg {

// Sagitta between two rays of length r separated by phi degrees.
inline double chord_height(double r, double phi_deg) { return r * (1.0 - std::cos(radians(phi_deg) / 2.0)); }

// Number of uniformly spaced profiles for a fixed crown radius: start at
// `initial` and double while the chord height exceeds the footprint.
inline int profile_count_for_radius(double r, double afp, int initial, int cap = 4096) {
  int count = initial;
  while (count < cap && chord_height(r, 360.0 / count) > afp) count *= 2;
  return count;
}

// Radius of a narrow cone crown of an adjacent tree with height h_ad.
inline double cone_crown_radius(double h_ad, const SegConfig& cfg) {
  return h_ad * cfg.cl_cone / std::tan(radians(90.0 - cfg.epsilon_deg)) * cfg.o_cone;
}

inline double sphere_crown_radius(double h_ad, const SegConfig& cfg) { return h_ad * cfg.cl_sphere / 2.0 * cfg.o_sphere; }

// Width of the window right of a local minimum, interpolated between the
// sphere radius (at 32.7 degrees) and the cone radius (at 90 - epsilon).
inline double right_window_width(double s_right_deg, double h_ad, const SegConfig& cfg) {
  const double steep = 90.0 - cfg.epsilon_deg;
  const double s = std::clamp(s_right_deg, kSphereExpectedSlopeDeg, steep);
  const double cone_weight = (s - kSphereExpectedSlopeDeg) / (steep - kSphereExpectedSlopeDeg);
  if (cone_weight == 0.0) return sphere_crown_radius(h_ad, cfg);
  if (cone_weight == 1.0) return cone_crown_radius(h_ad, cfg);
  return cone_crown_radius(h_ad, cfg) * cone_weight + sphere_crown_radius(h_ad, cfg) * (1.0 - cone_weight);
}

}  // namespace canopy::treeseg
