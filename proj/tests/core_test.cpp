#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "canopy/core/geometry.hpp"
#include "canopy/core/io.hpp"
#include "canopy/core/point_cloud.hpp"
#include "canopy/core/preprocess.hpp"
#include "canopy/core/raster.hpp"

using namespace canopy;

namespace {

// n x n lattice with one point per cell at cell centers.
PointCloud lattice(double side, int n, HeightFrame frame, double z = 10.0) {
  std::vector<Point3D> pts;
  const double w = side / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      pts.push_back({(i + 0.5) * w, (j + 0.5) * w, z, PointClass::vegetation, pts.size()});
  return PointCloud::with_extent(std::move(pts), BBox::of(0, 0, side, side), frame);
}

Dem flat_dem(double z, BBox box, double res = 1.0) {
  return Dem(RasterGrid<double>::covering(box, res, z));
}

SurfacePointSet surface(std::vector<Point3D> pts, double afp = 1.0) {
  SurfacePointSet s;
  s.points = std::move(pts);
  s.afp = afp;
  for (auto& p : s.points) s.extent.expand(p.x, p.y);
  return s;
}

}  // namespace

TEST(Afp, MatchesReciprocalRootOfDensity) {
  // 10 x 10 m with 5000 points is 50 pt/m2.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 5000; ++i) pts.push_back({u(rng), u(rng), 1.0});
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 10, 10));
  EXPECT_NEAR(compute_afp(c), 0.14142, 1e-5);
  EXPECT_DOUBLE_EQ(compute_afp(lattice(10, 10, HeightFrame::absolute)), 1.0);
  EXPECT_DOUBLE_EQ(compute_afp(lattice(10, 20, HeightFrame::absolute)), 0.5);
}

TEST(Afp, EmptyCloudThrows) {
  PointCloud c;
  c.extent = BBox::of(0, 0, 1, 1);
  EXPECT_THROW(compute_afp(c), EmptyInput);
}

TEST(Afp, StrictlyDecreasesAsPointsAreAdded) {
  auto c = lattice(10, 5, HeightFrame::absolute);
  double prev = compute_afp(c);
  for (int k = 0; k < 20; ++k) {
    c.points.push_back({5.0, 5.0, 1.0});
    const double now = compute_afp(c);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Normalize, SubtractsAndClamps) {
  std::vector<Point3D> pts{{1, 1, 300.0}, {2, 2, 279.9}};
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 4, 4));
  auto r = normalize_heights(c, flat_dem(280.0, BBox::of(0, 0, 4, 4)));
  EXPECT_EQ(r.cloud.frame, HeightFrame::above_ground);
  EXPECT_DOUBLE_EQ(r.cloud.points[0].z, 20.0);
  EXPECT_DOUBLE_EQ(r.cloud.points[1].z, 0.0);
  EXPECT_EQ(r.outside_dem, 0u);
}

TEST(Normalize, FlatZeroGroundIsIdentity) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 500; ++i) pts.push_back({u(rng), u(rng), u(rng)});
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 20, 20));
  auto r = normalize_heights(c, flat_dem(0.0, BBox::of(0, 0, 20, 20)));
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(r.cloud.points[i].z, pts[i].z);
}

TEST(Normalize, AddingGroundBackReconstructs) {
  // Tilted plane DEM; points above ground recover exactly up to rounding.
  auto g = RasterGrid<double>::covering(BBox::of(0, 0, 20, 20), 1.0);
  for (std::size_t i = 0; i < g.cell_count(); ++i) g[i] = 100.0 + 0.3 * g.cell_center(g.unlinear(i)).x;
  const Dem dem(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, 19.0), h(0.5, 30.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 300; ++i) {
    Point3D p{u(rng), u(rng), 0.0};
    p.z = dem.elevation_at(p.x, p.y) + h(rng);
    pts.push_back(p);
  }
  auto r = normalize_heights(PointCloud::with_extent(pts, BBox::of(0, 0, 20, 20)), dem);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& q = r.cloud.points[i];
    EXPECT_NEAR(q.z + dem.elevation_at(q.x, q.y), pts[i].z, 1e-9);
  }
}

TEST(Normalize, CountsPointsOutsideDem) {
  std::vector<Point3D> pts{{1, 1, 10.0}, {30, 30, 10.0}};
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 30, 30));
  auto r = normalize_heights(c, flat_dem(2.0, BBox::of(0, 0, 10, 10)));
  EXPECT_EQ(r.outside_dem, 1u);
  EXPECT_DOUBLE_EQ(r.cloud.points[1].z, 8.0);
}

TEST(Normalize, RejectsNormalizedCloud) {
  auto c = lattice(4, 4, HeightFrame::above_ground);
  EXPECT_THROW(normalize_heights(c, flat_dem(0, c.extent)), InvalidInput);
}

TEST(Lsp, KeepsHighestOfCell) {
  std::vector<Point3D> pts{{0.2, 0.2, 3, PointClass::vegetation, 0},
                           {0.5, 0.5, 7, PointClass::vegetation, 1},
                           {0.8, 0.8, 5, PointClass::vegetation, 2}};
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 1, 1), HeightFrame::above_ground);
  auto s = extract_lsps(c, 1.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.points[0].z, 7.0);
}

TEST(Lsp, GroundOnlyCellLeavesGap) {
  std::vector<Point3D> pts{{0.5, 0.5, 0.0, PointClass::ground, 0},
                           {0.6, 0.6, 0.05, PointClass::ground, 1},
                           {1.5, 0.5, 6.0, PointClass::vegetation, 2}};
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 2, 1), HeightFrame::above_ground);
  auto s = extract_lsps(c, 1.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.points[0].id, 2u);
}

TEST(Lsp, FullGridGivesOnePerCell) {
  EXPECT_EQ(extract_lsps(lattice(10, 10, HeightFrame::above_ground), 1.0).size(), 100u);
}

TEST(Lsp, OutputIsCellMaximumProperty) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 8.0), h(0.0, 25.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 2000; ++i) {
    Point3D p{u(rng), u(rng), h(rng), PointClass::vegetation, static_cast<PointId>(i)};
    if (i % 7 == 0) p.cls = PointClass::ground;
    pts.push_back(p);
  }
  auto c = PointCloud::with_extent(pts, BBox::of(0, 0, 8, 8), HeightFrame::above_ground);
  const double w = 0.7;
  auto s = extract_lsps(c, w);
  // Brute-force cell maxima.
  const auto grid = bin_points(c.points, c.extent, w);
  std::size_t nonempty = 0;
  for (const auto& cell : grid.cells()) nonempty += !cell.empty();
  EXPECT_LE(s.size(), nonempty);
  for (const Point3D& p : s.points) {
    double top = -1;
    for (std::size_t j : grid[grid.linear_of(p.x, p.y)]) top = std::max(top, c.points[j].z);
    EXPECT_EQ(p.z, top);
    EXPECT_NE(p.cls, PointClass::ground);
  }
}

TEST(Smooth, ConstantFieldUnchanged) {
  std::vector<Point3D> pts;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) pts.push_back({i * 0.5, j * 0.5, 12.5});
  auto s = gaussian_smooth(surface(pts), 1.0);
  for (const auto& p : s.points) EXPECT_NEAR(p.z, 12.5, 1e-12);
}

TEST(Smooth, IsolatedPointUnchanged) {
  auto s = gaussian_smooth(surface({{0, 0, 17.0}, {100, 100, 3.0}}), 1.0);
  EXPECT_EQ(s.points[0].z, 17.0);
  EXPECT_EQ(s.points[1].z, 3.0);
}

TEST(Smooth, SpikeFallsBetweenNeighbors) {
  std::vector<Point3D> pts;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) pts.push_back({i * 0.5, j * 0.5, (i == 0 && j == 0) ? 30.0 : 20.0});
  auto s = gaussian_smooth(surface(pts), 0.5);
  const auto spike = std::find_if(s.points.begin(), s.points.end(), [](auto& p) { return p.x == 0 && p.y == 0; });
  EXPECT_GT(spike->z, 20.0);
  EXPECT_LT(spike->z, 30.0);
}

TEST(Smooth, MatchesDirectWeightedMean) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 6.0), h(2.0, 30.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({u(rng), u(rng), h(rng)});
  const double sigma = 0.4;
  auto s = gaussian_smooth(surface(pts), sigma);
  ASSERT_EQ(s.size(), pts.size());
  double zmin = INFINITY, zmax = -INFINITY;
  for (auto& p : pts) zmin = std::min(zmin, p.z), zmax = std::max(zmax, p.z);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double ws = 0, zs = 0;
    for (const auto& q : pts) {
      const double d2 = (q.x - pts[i].x) * (q.x - pts[i].x) + (q.y - pts[i].y) * (q.y - pts[i].y);
      if (d2 > 9 * sigma * sigma) continue;
      const double w = std::exp(-d2 / (2 * sigma * sigma));
      ws += w, zs += w * q.z;
    }
    EXPECT_NEAR(s.points[i].z, zs / ws, 1e-9);
    EXPECT_EQ(s.points[i].x, pts[i].x);
    EXPECT_EQ(s.points[i].y, pts[i].y);
    EXPECT_GE(s.points[i].z, zmin - 1e-12);
    EXPECT_LE(s.points[i].z, zmax + 1e-12);
  }
}

TEST(Hull, SquareDropsCenter) {
  std::vector<Vec2> v{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  auto h = convex_hull(v);
  EXPECT_EQ(h.size(), 4u);
  EXPECT_FALSE(h.degenerate());
  EXPECT_DOUBLE_EQ(h.area(), 1.0);
  for (const Vec2& p : h.vertices()) EXPECT_FALSE(p.x == 0.5 && p.y == 0.5);
}

TEST(Hull, CollinearIsDegenerate) {
  std::vector<Vec2> v{{0, 0}, {1, 1}, {2, 2}};
  EXPECT_TRUE(convex_hull(v).degenerate());
  std::vector<Vec2> two{{3, 3}, {3, 3}};
  EXPECT_TRUE(convex_hull(two).degenerate());
  EXPECT_THROW(convex_hull(std::span<const Vec2>{}), EmptyInput);
}

TEST(Hull, RandomDiskContainmentAndMinimality) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ang(0, 2 * std::numbers::pi), rad(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec2> v;
    for (int i = 0; i < 100; ++i) {
      const double a = ang(rng), r = 5.0 * std::sqrt(rad(rng));
      v.push_back({r * std::cos(a), r * std::sin(a)});
    }
    auto h = convex_hull(v);
    EXPECT_LE(h.area(), std::numbers::pi * 25.0);
    for (const Vec2& p : v) EXPECT_TRUE(h.contains(p));
    // Brute force: a pair (a, b) is a hull edge iff every point lies on one
    // side. Hull vertex count must match the number of such extreme points.
    std::set<std::pair<double, double>> extreme;
    for (std::size_t a = 0; a < v.size(); ++a)
      for (std::size_t b = 0; b < v.size(); ++b) {
        if (a == b) continue;
        bool left = true;
        for (std::size_t c = 0; c < v.size() && left; ++c) left = orient(v[a], v[b], v[c]) >= 0;
        if (left) extreme.insert({v[a].x, v[a].y}), extreme.insert({v[b].x, v[b].y});
      }
    EXPECT_EQ(h.size(), extreme.size());
    // Counterclockwise, no three collinear.
    const auto& hv = h.vertices();
    for (std::size_t i = 0; i < hv.size(); ++i)
      EXPECT_GT(orient(hv[i], hv[(i + 1) % hv.size()], hv[(i + 2) % hv.size()]), 0.0);
  }
}

TEST(Hull, MinWidthOfRectangle) {
  std::vector<Vec2> v{{0, 0}, {5, 0}, {5, 2}, {0, 2}, {2, 1}};
  EXPECT_NEAR(convex_hull(v).min_width(), 2.0, 1e-12);
  EXPECT_NEAR(convex_hull(v).diameter(), std::hypot(5.0, 2.0), 1e-12);
}

TEST(Dem, UniformGround) {
  auto g = lattice(10, 20, HeightFrame::absolute, 100.0);
  for (auto& p : g.points) p.cls = PointClass::ground;
  auto dem = build_dem(g, 1.0);
  for (double v : dem.grid().cells()) EXPECT_EQ(v, 100.0);
}

TEST(Dem, VoidFilledFromNeighbors) {
  std::vector<Point3D> pts;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != 1 || j != 1) pts.push_back({i + 0.5, j + 0.5, 100.0, PointClass::ground});
  auto g = PointCloud::with_extent(pts, BBox::of(0, 0, 3, 3));
  auto dem = build_dem(g, 1.0);
  EXPECT_EQ(dem.grid().at({1, 1}), 100.0);
}

TEST(Dem, TiltedPlaneCellMean) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 4000; ++i) {
    const double x = u(rng), y = u(rng);
    pts.push_back({x, y, x, PointClass::ground});
  }
  auto g = PointCloud::with_extent(pts, BBox::of(0, 0, 10, 10));
  const double res = 2.0;
  auto dem = build_dem(g, res);
  const auto& grid = dem.grid();
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    double sum = 0;
    int n = 0;
    for (auto& p : pts)
      if (grid.linear_of(p.x, p.y) == i) sum += p.z, ++n;
    ASSERT_GT(n, 0);
    EXPECT_NEAR(grid[i], sum / n, 1e-9);
    EXPECT_LE(std::abs(grid[i] - grid.cell_center(grid.unlinear(i)).x), 0.5 * res * 1.0);
  }
}

TEST(Dem, NoGroundThrows) {
  PointCloud g;
  EXPECT_THROW(build_dem(g, 1.0), EmptyInput);
}

TEST(Io, PointCloudRoundTrip) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<Point3D> pts;
  for (int i = 0; i < 200; ++i)
    pts.push_back({u(rng), u(rng), u(rng) / 3.0, i % 3 ? PointClass::vegetation : PointClass::ground,
                   static_cast<PointId>(1000 + i)});
  auto c = PointCloud::with_extent(pts, BBox::of(-60, -60, 60, 60), HeightFrame::above_ground);
  std::stringstream ss;
  io::write_point_cloud(ss, c, true);
  auto back = io::read_point_cloud(ss);
  ASSERT_EQ(back.size(), c.size());
  EXPECT_EQ(back.frame, HeightFrame::above_ground);
  EXPECT_EQ(back.extent, c.extent);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(back.points[i].x, pts[i].x);
    EXPECT_EQ(back.points[i].y, pts[i].y);
    EXPECT_EQ(back.points[i].z, pts[i].z);
    EXPECT_EQ(back.points[i].cls, pts[i].cls);
    EXPECT_EQ(back.points[i].id, pts[i].id);
  }
}

TEST(Io, PointCloudParseErrorsCarryLine) {
  std::stringstream ss("1 2 3 5\n1 2 x 5\n");
  try {
    io::read_point_cloud(ss);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::stringstream bad_class("1 2 3 9\n");
  EXPECT_THROW(io::read_point_cloud(bad_class), ParseError);
  std::stringstream fields("1 2 3\n");
  EXPECT_THROW(io::read_point_cloud(fields), ParseError);
}

TEST(Io, EsriAsciiRoundTripAndOrientation) {
  std::stringstream ss(
      "ncols 3\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 5\nNODATA_value -9999\n"
      "1 2 3\n4 5 6\n");
  auto dem = io::read_esri_ascii(ss);
  // First data row is the northern one.
  EXPECT_EQ(dem.grid().at({0, 1}), 1.0);
  EXPECT_EQ(dem.grid().at({2, 0}), 6.0);
  EXPECT_EQ(dem.extent(), BBox::of(10, 20, 25, 30));
  std::stringstream out;
  io::write_esri_ascii(out, dem);
  auto again = io::read_esri_ascii(out);
  EXPECT_EQ(again.grid().cells(), dem.grid().cells());
}

TEST(Io, EsriAsciiErrors) {
  std::stringstream short_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n");
  EXPECT_THROW(io::read_esri_ascii(short_grid), ParseError);
  std::stringstream no_cell("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\n1\n");
  EXPECT_THROW(io::read_esri_ascii(no_cell), ParseError);
  std::stringstream junk("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nabc\n");
  EXPECT_THROW(io::read_esri_ascii(junk), ParseError);
}

TEST(Io, EsriAsciiFillsNodata) {
  std::stringstream ss("ncols 3\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n7 -1 7\n");
  auto dem = io::read_esri_ascii(ss);
  EXPECT_EQ(dem.grid().at({1, 0}), 7.0);
}
