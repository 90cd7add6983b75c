#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/error.hpp"

namespace canopy::treeseg {

// Expected slope of a sphere-shaped crown surface, in degrees.
inline constexpr double kSphereExpectedSlopeDeg = 32.7;

struct SegConfig {
  double max_profile_distance = 20.0;  // m
  int initial_profiles = 8;
  double mdcw = 1.5;             // minimum detectable crown width, m
  double min_tree_height = 4.0;  // m
  double epsilon_deg = 5.0;      // deviation of a narrow cone from nadir
  double cl_cone = 0.8;          // crown length ratios
  double cl_sphere = 0.7;
  double o_cone = 2.0 / 3.0;     // overlap radius reductions
  double o_sphere = 1.0 / 3.0;
  double gap_iqr_factor = 6.0;
  double profile_width_factor = 2.0;    // x AFP
  double smoothing_sigma_factor = 2.0;  // x AFP
  double claim_tolerance_factor = 1.0;  // x AFP, hull outline slack when claiming
  int max_profiles = 4096;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw InvalidInput(std::string("SegConfig: ") + name + " must be positive");
    };
    auto ratio = [](double v, const char* name) {
      if (!(v > 0.0 && v <= 1.0)) throw InvalidInput(std::string("SegConfig: ") + name + " must lie in (0, 1]");
    };
    positive(max_profile_distance, "max_profile_distance");
    positive(mdcw, "mdcw");
    positive(min_tree_height, "min_tree_height");
    positive(epsilon_deg, "epsilon_deg");
    positive(gap_iqr_factor, "gap_iqr_factor");
    positive(profile_width_factor, "profile_width_factor");
    positive(smoothing_sigma_factor, "smoothing_sigma_factor");
    if (!(claim_tolerance_factor >= 0.0)) throw InvalidInput("SegConfig: claim_tolerance_factor must be >= 0");
    ratio(cl_cone, "cl_cone");
    ratio(cl_sphere, "cl_sphere");
    ratio(o_cone, "o_cone");
    ratio(o_sphere, "o_sphere");
    if (initial_profiles < 3) throw InvalidInput("SegConfig: initial_profiles must be at least 3");
    if (max_profiles < initial_profiles) throw InvalidInput("SegConfig: max_profiles below initial_profiles");
    if (!(90.0 - epsilon_deg > kSphereExpectedSlopeDeg))
      throw InvalidInput("SegConfig: epsilon_deg must be below 57.3");
  }
};

struct ProfilePoint {
  double distance = 0.0;  // along the ray from the GMX, m
  double height = 0.0;
  std::size_t index = 0;  // into the surface point set
  PointId id = 0;
};

struct Profile {
  double azimuth = 0.0;  // degrees counterclockwise from east
  double width = 0.0;
  std::vector<ProfilePoint> points;  // points[0] is the GMX
};

struct Crown {
  std::size_t id = 0;
  Point3D apex;
  Polygon2D hull;
  std::vector<Point3D> members;  // member surface points, ascending id
  double max_radius = 0.0;
  double height = 0.0;
  int layer = 0;  // canopy layer tag; 0 when unstratified

  std::vector<PointId> member_ids() const {
    std::vector<PointId> ids;
    ids.reserve(members.size());
    for (const Point3D& p : members) ids.push_back(p.id);
    return ids;
  }
};

}  // namespace canopy::treeseg
