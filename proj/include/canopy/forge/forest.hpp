#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/core/raster.hpp"
#include "canopy/error.hpp"
#include "canopy/eval/stem.hpp"
#include "canopy/occlusion/log_series.hpp"

namespace canopy::forge {

enum class CrownShape { cone, ellipsoid, hemisphere };

inline CrownShape crown_shape_from(const std::string& s) {
  if (s == "cone") return CrownShape::cone;
  if (s == "ellipsoid") return CrownShape::ellipsoid;
  if (s == "hemisphere") return CrownShape::hemisphere;
  throw SpecError("unknown crown shape '" + s + "'");
}

inline const char* to_string(CrownShape s) {
  switch (s) {
    case CrownShape::cone: return "cone";
    case CrownShape::ellipsoid: return "ellipsoid";
    case CrownShape::hemisphere: return "hemisphere";
  }
  return "cone";
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

enum class Placement { poisson, grid };

struct StandSpec {
  std::optional<std::size_t> count;
  std::optional<double> density_per_ha;
  Placement placement = Placement::poisson;
  double min_spacing = 0.0;  // minimum stem distance for poisson placement, m
  Range height{15.0, 25.0};
  Range crown_ratio{0.4, 0.8};
  Range crown_radius{2.0, 4.0};
  CrownShape shape = CrownShape::cone;
  int story = 1;
  std::optional<BBox> region;  // defaults to the forest extent
};

struct TreeSpec {
  double x = 0.0;
  double y = 0.0;
  double height = 20.0;
  double crown_radius = 3.0;
  double crown_base = 10.0;
  CrownShape shape = CrownShape::cone;
  int story = 1;
};

struct GroundSpec {
  double base_elevation = 0.0;
  double relief_amplitude = 0.0;
  double relief_wavelength = 100.0;

  double elevation(double x, double y) const {
    if (relief_amplitude == 0.0) return base_elevation;
    const double k = 2.0 * std::numbers::pi / relief_wavelength;
    return base_elevation + relief_amplitude * std::sin(k * x) * std::cos(k * y);
  }
};

struct ForestSpec {
  BBox extent = BBox::of(0, 0, 100, 100);
  double pulse_density = 10.0;  // pt/m2
  double noise_sigma = 0.0;     // m, vertical
  std::uint64_t seed = 0;
  GroundSpec ground;
  double dem_resolution = 1.0;
  std::optional<double> theta;              // log-series story fractions
  std::vector<double> layer_fractions;      // explicit story fractions (story 1 first)
  std::vector<StandSpec> stands;
  std::vector<TreeSpec> trees;              // explicitly placed trees
  std::size_t max_placement_attempts = 200;  // per tree, for spacing rejection

  // Fraction of pulses returned by story n.
  double story_fraction(int story) const {
    if (theta) return occlusion::LogSeriesModel(*theta).pmf(story);
    if (!layer_fractions.empty()) {
      if (story > static_cast<int>(layer_fractions.size())) return 0.0;
      return layer_fractions[static_cast<std::size_t>(story - 1)];
    }
    return story == 1 ? 1.0 : 0.0;
  }

  void validate() const {
    if (extent.empty() || !(extent.area() > 0)) throw SpecError("forge: extent must have positive area");
    if (!(pulse_density > 0)) throw SpecError("forge: pulse_density must be positive");
    if (!(noise_sigma >= 0)) throw SpecError("forge: noise_sigma must be non-negative");
    if (!(dem_resolution > 0)) throw SpecError("forge: dem_resolution must be positive");
    if (theta && !(*theta > 0 && *theta < 1)) throw SpecError("forge: theta must lie in (0, 1)");
    double sum = 0.0;
    for (double f : layer_fractions) {
      if (!(f >= 0)) throw SpecError("forge: layer fractions must be non-negative");
      sum += f;
    }
    if (sum > 1.0 + 1e-12) throw SpecError("forge: layer fractions sum above 1");
    for (const StandSpec& s : stands) {
      if (!s.count && !s.density_per_ha) throw SpecError("forge: stand needs a count or density_per_ha");
      if (s.density_per_ha && !(*s.density_per_ha > 0)) throw SpecError("forge: stand density must be positive");
      if (s.story < 1) throw SpecError("forge: story must be >= 1");
      if (!(s.height.lo > 0 && s.height.hi >= s.height.lo)) throw SpecError("forge: bad height range");
      if (!(s.crown_ratio.lo > 0 && s.crown_ratio.hi <= 1 && s.crown_ratio.hi >= s.crown_ratio.lo))
        throw SpecError("forge: crown ratio range must lie in (0, 1]");
      if (!(s.crown_radius.lo > 0 && s.crown_radius.hi >= s.crown_radius.lo)) throw SpecError("forge: bad crown radius range");
      if (!(s.min_spacing >= 0)) throw SpecError("forge: min_spacing must be non-negative");
    }
    for (const TreeSpec& t : trees) {
      if (!(t.height > 0 && t.crown_radius > 0 && t.crown_base >= 0 && t.crown_base < t.height))
        throw SpecError("forge: explicit tree needs 0 <= crown_base < height and a positive radius");
      if (t.story < 1) throw SpecError("forge: story must be >= 1");
    }
  }
};

struct Tree {
  std::size_t id = 0;  // 1-based
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;
  double crown_base = 0.0;
  double crown_radius = 0.0;
  CrownShape shape = CrownShape::cone;
  int story = 1;

  // Visible top-surface height at horizontal distance rho, or nullopt
  // outside the crown footprint.
  std::optional<double> surface(double rho) const {
    if (rho > crown_radius) return std::nullopt;
    const double u = rho / crown_radius;
    const double len = height - crown_base;
    switch (shape) {
      case CrownShape::cone: return height - len * u;
      case CrownShape::ellipsoid: {
        const double c = len / 2.0;
        return crown_base + c + c * std::sqrt(std::max(0.0, 1.0 - u * u));
      }
      case CrownShape::hemisphere: return crown_base + len * std::sqrt(std::max(0.0, 1.0 - u * u));
    }
    return std::nullopt;
  }
};

struct PointLabel {
  std::size_t tree = 0;  // 0 for ground returns
  int story = 0;         // 0 for ground returns
};

struct GroundTruth {
  std::vector<Tree> trees;
  std::vector<eval::StemRecord> stems;
  std::vector<PointLabel> labels;  // indexed by point id; every generated point
};

struct Forest {
  PointCloud cloud;
  Dem dem;
  GroundTruth truth;
};

// Deterministic stream: 53-bit uniforms and Box-Muller normals on top of
// mt19937_64, so output does not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

namespace detail {

inline std::vector<Tree> place_trees(const ForestSpec& spec, Rng& rng) {
  std::vector<Tree> trees;
  for (const TreeSpec& t : spec.trees)
    trees.push_back({trees.size() + 1, t.x, t.y, t.height, t.crown_base, t.crown_radius, t.shape, t.story});

  for (const StandSpec& s : spec.stands) {
    const BBox region = s.region.value_or(spec.extent);
    const std::size_t n = s.count ? *s.count
                                  : static_cast<std::size_t>(std::llround(*s.density_per_ha * region.area() / 1e4));
    auto draw_tree = [&](double x, double y) {
      Tree t;
      t.id = trees.size() + 1;
      t.x = x;
      t.y = y;
      t.height = rng.uniform(s.height.lo, s.height.hi);
      t.crown_base = t.height * (1.0 - rng.uniform(s.crown_ratio.lo, s.crown_ratio.hi));
      t.crown_radius = rng.uniform(s.crown_radius.lo, s.crown_radius.hi);
      t.shape = s.shape;
      t.story = s.story;
      trees.push_back(t);
    };
    if (n == 0) continue;
    if (s.placement == Placement::grid) {
      const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(n * region.width() / region.height())));
      const std::size_t rows = (n + cols - 1) / cols;
      const double dx = region.width() / static_cast<double>(cols), dy = region.height() / static_cast<double>(rows);
      for (std::size_t i = 0; i < n; ++i) {
        const double cx = region.xmin + (static_cast<double>(i % cols) + 0.5) * dx;
        const double cy = region.ymin + (static_cast<double>(i / cols) + 0.5) * dy;
        // Jitter keeps at least min_spacing between neighbors when possible.
        const double jx = std::max(0.0, (dx - s.min_spacing) / 2.0), jy = std::max(0.0, (dy - s.min_spacing) / 2.0);
        draw_tree(cx + rng.uniform(-jx, jx), cy + rng.uniform(-jy, jy));
      }
      continue;
    }
    std::size_t placed = 0;
    const std::size_t first = trees.size();
    for (std::size_t attempt = 0; placed < n && attempt < n * spec.max_placement_attempts; ++attempt) {
      const double x = rng.uniform(region.xmin, region.xmax), y = rng.uniform(region.ymin, region.ymax);
      bool ok = true;
      for (std::size_t j = first; ok && j < trees.size(); ++j)
        ok = std::hypot(trees[j].x - x, trees[j].y - y) >= s.min_spacing;
      if (!ok) continue;
      draw_tree(x, y);
      ++placed;
    }
    if (placed < n)
      throw SpecError("forge: could only place " + std::to_string(placed) + " of " + std::to_string(n) +
                      " trees at the requested spacing");
  }
  return trees;
}

// One sample per cell of a jittered grid of the given density over `box`.
template <typename Fn>
void jittered_samples(const BBox& box, double density, Rng& rng, Fn&& fn) {
  if (!(density > 0)) return;
  const double cell = 1.0 / std::sqrt(density);
  const auto cols = static_cast<std::size_t>(std::ceil(box.width() / cell));
  const auto rows = static_cast<std::size_t>(std::ceil(box.height() / cell));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = box.xmin + (static_cast<double>(c) + rng.uniform()) * cell;
      const double y = box.ymin + (static_cast<double>(r) + rng.uniform()) * cell;
      if (x > box.xmax || y > box.ymax) continue;
      fn(x, y);
    }
}

inline std::vector<eval::StemRecord> stems_for(const std::vector<Tree>& trees) {
  std::vector<double> top;
  for (const Tree& t : trees)
    if (t.story == 1) top.push_back(t.height);
  std::sort(top.begin(), top.end());
  const double dominant_cut = top.empty() ? 0.0 : top[static_cast<std::size_t>(0.9 * static_cast<double>(top.size() - 1))];
  std::vector<eval::StemRecord> stems;
  for (const Tree& t : trees) {
    eval::StemRecord s;
    s.id = t.id;
    s.x = t.x;
    s.y = t.y;
    s.height = t.height;
    if (t.story == 1) s.crown_class = t.height > dominant_cut ? eval::CrownClass::dominant : eval::CrownClass::codominant;
    else if (t.story == 2) s.crown_class = eval::CrownClass::intermediate;
    else s.crown_class = eval::CrownClass::overtopped;
    stems.push_back(s);
  }
  return stems;
}

}  // namespace detail

// Generates a synthetic stand. Each story n is sampled on a jittered pulse
// grid at story_fraction(n) * pulse_density; a pulse lands on the highest
// crown of that story covering it and is lost otherwise. Every tree also
// returns its exact apex. Ground returns top the total up to pulse_density.
inline Forest generate_forest(const ForestSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Forest f;
  f.truth.trees = detail::place_trees(spec, rng);
  f.truth.stems = detail::stems_for(f.truth.trees);

  std::map<int, std::vector<const Tree*>> by_story;
  for (const Tree& t : f.truth.trees) by_story[t.story].push_back(&t);

  std::vector<Point3D> pts;
  auto emit = [&](double x, double y, double height, PointClass cls, PointLabel label) {
    Point3D p;
    p.x = x;
    p.y = y;
    p.z = spec.ground.elevation(x, y) + height;
    p.cls = cls;
    p.id = pts.size();
    pts.push_back(p);
    f.truth.labels.push_back(label);
  };

  for (const auto& [story, trees] : by_story) {
    const double fraction = spec.story_fraction(story);
    // Bucket crowns for coverage lookup.
    double max_r = 0.0;
    for (const Tree* t : trees) max_r = std::max(max_r, t->crown_radius);
    const double bucket = std::max(1.0, 2.0 * max_r);
    auto grid = RasterGrid<std::vector<const Tree*>>::covering(spec.extent.inflated(max_r), bucket);
    for (const Tree* t : trees) {
      const CellIndex lo = grid.cell_of(t->x - t->crown_radius, t->y - t->crown_radius);
      const CellIndex hi = grid.cell_of(t->x + t->crown_radius, t->y + t->crown_radius);
      for (std::size_t r = lo.row; r <= hi.row; ++r)
        for (std::size_t c = lo.col; c <= hi.col; ++c) grid.at({c, r}).push_back(t);
    }
    detail::jittered_samples(spec.extent, fraction * spec.pulse_density, rng, [&](double x, double y) {
      const Tree* hit = nullptr;
      double best = -1.0;
      for (const Tree* t : grid.at(grid.cell_of(x, y))) {
        const auto z = t->surface(std::hypot(x - t->x, y - t->y));
        if (z && *z > best) {
          best = *z;
          hit = t;
        }
      }
      if (!hit) return;
      const double noise = spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0;
      emit(x, y, std::max(0.0, best + noise), PointClass::vegetation, {hit->id, story});
    });
    for (const Tree* t : trees)
      if (spec.extent.contains(t->x, t->y)) emit(t->x, t->y, t->height, PointClass::vegetation, {t->id, story});
  }

  const double target = spec.pulse_density * spec.extent.area();
  const double ground_density = std::max(0.0, target - static_cast<double>(pts.size())) / spec.extent.area();
  detail::jittered_samples(spec.extent, ground_density, rng, [&](double x, double y) {
    const double noise = spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0;
    emit(x, y, noise, PointClass::ground, {0, 0});
  });

  f.cloud = PointCloud::with_extent(std::move(pts), spec.extent, HeightFrame::absolute);
  RasterGrid<double> g = RasterGrid<double>::covering(spec.extent, spec.dem_resolution);
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    const Vec2 c = g.cell_center(g.unlinear(i));
    g[i] = spec.ground.elevation(c.x, c.y);
  }
  f.dem = Dem(std::move(g));
  return f;
}

// Rows: true story (0 = ground); columns: assigned layer (0 = none).
struct ContaminationMatrix {
  std::vector<int> stories;
  std::vector<int> layers;
  std::vector<std::vector<std::size_t>> counts;  // [story row][layer column]

  std::size_t at(int story, int layer) const {
    const auto r = std::find(stories.begin(), stories.end(), story);
    const auto c = std::find(layers.begin(), layers.end(), layer);
    if (r == stories.end() || c == layers.end()) return 0;
    return counts[static_cast<std::size_t>(r - stories.begin())][static_cast<std::size_t>(c - layers.begin())];
  }

  // Share of story points (stories >= 1) that landed in a layer whose index
  // differs from their story.
  double off_diagonal_fraction() const {
    std::size_t total = 0, off = 0;
    for (std::size_t r = 0; r < stories.size(); ++r) {
      if (stories[r] == 0) continue;
      for (std::size_t c = 0; c < layers.size(); ++c) {
        if (layers[c] == 0) continue;
        total += counts[r][c];
        if (layers[c] != stories[r]) off += counts[r][c];
      }
    }
    return total ? static_cast<double>(off) / static_cast<double>(total) : 0.0;
  }
};

// `layer_of` maps point id to assigned layer (absent = unassigned).
inline ContaminationMatrix truth_layer_report(const GroundTruth& truth, const std::map<PointId, int>& layer_of) {
  std::map<int, std::map<int, std::size_t>> cells;
  std::vector<int> layers;
  for (PointId id = 0; id < truth.labels.size(); ++id) {
    const PointLabel& label = truth.labels[id];
    if (label.story == 0) continue;
    const auto it = layer_of.find(id);
    const int layer = it == layer_of.end() ? 0 : it->second;
    ++cells[label.story][layer];
  }
  for (const auto& [story, row] : cells)
    for (const auto& [layer, n] : row) layers.push_back(layer);
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  ContaminationMatrix m;
  m.layers = layers;
  for (const auto& [story, row] : cells) {
    m.stories.push_back(story);
    std::vector<std::size_t> counts(layers.size(), 0);
    for (const auto& [layer, n] : row)
      counts[static_cast<std::size_t>(std::find(layers.begin(), layers.end(), layer) - layers.begin())] = n;
    m.counts.push_back(std::move(counts));
  }
  return m;
}

}  // namespace canopy::forge
