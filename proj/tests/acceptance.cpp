// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "canopy/app/commands.hpp"
#include "canopy/dist/runtime.hpp"
#include "canopy/dist/tile_map.hpp"
#include "canopy/eval/match.hpp"
#include "canopy/occlusion/fractions.hpp"
#include "canopy/occlusion/log_series.hpp"
#include "canopy/strata/layered.hpp"
#include "canopy/strata/stratify.hpp"
#include "canopy/treeseg/crown_model.hpp"
#include "canopy/treeseg/segment.hpp"
#include "support.hpp"

using namespace canopy;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kWindowRelTol = 1e-12;
constexpr double kPmfTol = 1e-4;
constexpr double kPcd2Tol = 0.1;
constexpr double kPcd3Tol = 0.5;
constexpr double kExactThetaTol = 0.001;
constexpr double kSampledThetaTol = 0.01;
constexpr std::size_t kSampledMinPoints = 10000;
constexpr double kProfileSeconds = 1.0;
constexpr double kHungarianSeconds = 10.0;
constexpr double kPurityMin = 0.95;
constexpr double kContaminationMax = 0.05;
constexpr double kStoryGapMin = 6.0;  // m, for a stand to count as separated
constexpr double kBlockSeconds = 600.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool ok = true;
  std::string summary;
  std::vector<std::string> failures;

  void require(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (failures.size() < 12) failures.push_back(what);
  }
};

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)); }

// ---------------------------------------------------------------- 1

Verdict profile_counts() {
  Verdict v;
  const auto t0 = Clock::now();
  // independent iteration of the chord rule
  auto by_hand = [](double r, double afp) {
    int n = 8;
    while (r * (1.0 - std::cos(std::numbers::pi / n)) > afp) n *= 2;
    return n;
  };
  const int a = treeseg::profile_count_for_radius(10.0, 0.1414, 8);
  const int b = treeseg::profile_count_for_radius(1.5, 0.5, 8);
  const double dt = seconds_since(t0);
  v.require(a == 32, fmt("r=10, afp=0.1414 gave %d", a));
  v.require(b == 8, fmt("r=1.5, afp=0.5 gave %d", b));
  v.require(a == by_hand(10.0, 0.1414) && b == by_hand(1.5, 0.5), "hand iteration disagrees");
  v.require(dt < kProfileSeconds, fmt("took %.3f s", dt));
  v.summary = fmt("profile counts %d (r=10 m) and %d (r=1.5 m) in %.2g s", a, b, dt);
  return v;
}

// ---------------------------------------------------------------- 2

Verdict window_endpoints() {
  Verdict v;
  const treeseg::SegConfig cfg;
  double worst = 0.0;
  for (double h : {5.0, 12.5, 20.0, 31.0, 45.0}) {
    const double cs = treeseg::sphere_crown_radius(h, cfg), cc = treeseg::cone_crown_radius(h, cfg);
    const double lo = treeseg::right_window_width(32.7, h, cfg), hi = treeseg::right_window_width(85.0, h, cfg);
    const double mid = treeseg::right_window_width((32.7 + 85.0) / 2.0, h, cfg);
    v.require(rel_close(lo, cs, kWindowRelTol), fmt("h=%g: w(32.7)=%.15g vs sphere %.15g", h, lo, cs));
    v.require(rel_close(hi, cc, kWindowRelTol), fmt("h=%g: w(85)=%.15g vs cone %.15g", h, hi, cc));
    v.require(rel_close(mid, (cs + cc) / 2.0, kWindowRelTol), fmt("h=%g: midpoint %.15g", h, mid));
    worst = std::max({worst, std::abs(lo - cs) / cs, std::abs(hi - cc) / cc, std::abs(mid - (cs + cc) / 2) / ((cs + cc) / 2)});
  }
  v.summary = fmt("window endpoints and midpoint, worst relative error %.1e", worst);
  return v;
}

// ---------------------------------------------------------------- 3

// theta at which f(theta) hits target, by bisection over a monotone f.
double solve_theta(const std::function<double(double)>& f, double target) {
  double lo = 0.01, hi = 0.99;
  const bool increasing = f(hi) > f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = (lo + hi) / 2;
    if ((f(mid) < target) == increasing) lo = mid;
    else hi = mid;
  }
  return (lo + hi) / 2;
}

forge::ForestSpec three_story_stand(std::uint64_t seed) {
  forge::ForestSpec spec;
  spec.extent = BBox::of(0, 0, 60, 60);
  spec.pulse_density = 12.0;
  spec.seed = seed;
  spec.theta = 0.266;
  struct S {
    std::size_t count;
    double spacing;
    forge::Range height, radius;
  };
  const S stories[] = {{36, 10, {40, 42}, {7.2, 7.6}}, {64, 7.5, {24, 26}, {5.4, 5.7}}, {100, 6, {8, 10}, {4.32, 4.56}}};
  int n = 1;
  for (const S& s : stories) {
    forge::StandSpec st;
    st.count = s.count;
    st.placement = forge::Placement::grid;
    st.min_spacing = s.spacing;
    st.height = s.height;
    st.crown_ratio = {0.15, 0.2};
    st.crown_radius = s.radius;
    st.shape = forge::CrownShape::ellipsoid;
    st.story = n++;
    spec.stands.push_back(st);
  }
  return spec;
}

Verdict occlusion_chain() {
  Verdict v;
  using occlusion::LogSeriesModel;
  const LogSeriesModel m(0.266);
  const double p1 = occlusion::log_series_pmf(m, 1);
  const double d2 = occlusion::pcd_min(2, 4.0, m), d3 = occlusion::pcd_min(3, 4.0, m);
  v.require(std::abs(p1 - 0.8602) <= kPmfTol, fmt("pmf(1)=%.6f", p1));
  v.require(std::abs(d2 - 28.6) <= kPcd2Tol, fmt("pcd_min(2)=%.4f", d2));
  v.require(std::abs(d3 - 157.3) <= kPcd3Tol, fmt("pcd_min(3)=%.4f", d3));

  // theta each published figure would need
  const double t2 = solve_theta([](double t) { return occlusion::pcd_min(2, 4.0, LogSeriesModel(t)); }, 30.1);
  const double t3 = solve_theta([](double t) { return occlusion::pcd_min(3, 4.0, LogSeriesModel(t)); }, 169.57);

  double worst_exact = 0.0;
  for (double theta : {0.05, 0.1, 0.266, 0.5, 0.8, 0.95}) {
    std::vector<occlusion::DensityObservation> obs;
    for (int n = 1; n <= occlusion::kFractionHorizon; ++n) obs.push_back({n, LogSeriesModel(theta).pmf(n)});
    const double fit = occlusion::fit_log_series(obs).model.theta();
    worst_exact = std::max(worst_exact, std::abs(fit - theta));
    v.require(std::abs(fit - theta) <= kExactThetaTol, fmt("exact data theta=%g fitted %.6f", theta, fit));
  }

  double worst_sampled = 0.0;
  std::size_t fewest = SIZE_MAX;
  for (std::uint64_t seed : {8, 9, 10}) {
    const auto f = forge::generate_forest(three_story_stand(seed));
    const PointCloud cloud = support::above_ground(f);
    fewest = std::min(fewest, cloud.size());
    v.require(cloud.size() >= kSampledMinPoints, fmt("seed %llu: only %zu points", (unsigned long long)seed, cloud.size()));
    const auto layers = strata::stratify(remove_ground(cloud), strata::StrataConfig{});
    v.require(layers.size() == 3, fmt("seed %llu: %zu layers", (unsigned long long)seed, layers.size()));
    const auto obs = occlusion::layer_fractions(layers, point_density(cloud));
    const double fit = occlusion::fit_log_series(obs).model.theta();
    worst_sampled = std::max(worst_sampled, std::abs(fit - 0.266));
    v.require(std::abs(fit - 0.266) <= kSampledThetaTol, fmt("forge seed %llu fitted %.4f", (unsigned long long)seed, fit));
  }

  v.summary = fmt(
      "pmf(1)=%.4f pcd_min(2)=%.3f pcd_min(3)=%.3f; published 30.1 and 169.57 need theta %.4f and %.4f, "
      "so theta=0.266 is rounded and neither figure is reproduced exactly; fit error %.1e exact, %.4f on "
      ">=%zu forge points",
      p1, d2, d3, t2, t3, worst_exact, worst_sampled, fewest);
  return v;
}

// ---------------------------------------------------------------- 4

Verdict matching() {
  Verdict v;
  const auto m = eval::metrics(eval::Counts{9, 1, 1});
  v.require(m.recall == 0.9 && m.precision == 0.9 && m.f_score == 0.9,
            fmt("metrics(9,1,1) = %.17g %.17g %.17g", m.recall, m.precision, m.f_score));

  // dyadic weights keep every partial sum exact, so totals compare with ==
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> side(0, 7), q(1, 1024);
  std::bernoulli_distribution forbid(0.3);
  const auto t0 = Clock::now();
  std::size_t mismatched = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = static_cast<std::size_t>(side(rng)), c = static_cast<std::size_t>(side(rng));
    std::vector<double> w(r * c);
    for (double& x : w) x = forbid(rng) ? std::nan("") : q(rng) / 1024.0;
    const auto a = eval::max_weight_assignment(r, c, w);
    std::vector<char> used(c, 0);
    double total = 0.0;
    bool valid = a.size() == r;
    for (std::size_t i = 0; valid && i < r; ++i) {
      if (!a[i]) continue;
      const std::size_t j = *a[i];
      valid = j < c && !used[j] && std::isfinite(w[i * c + j]);
      if (valid) used[j] = 1, total += w[i * c + j];
    }
    const double best = support::brute_force_best(r, c, w);
    if (!valid || total != best) {
      ++mismatched;
      v.require(false, fmt("trial %d (%zux%zu): %.10g vs optimum %.10g%s", trial, r, c, total, best,
                           valid ? "" : ", invalid assignment"));
    }
  }
  const double dt = seconds_since(t0);
  v.require(dt < kHungarianSeconds, fmt("200 instances took %.2f s", dt));
  v.summary = fmt("metrics(9,1,1)=(%.1f,%.1f,%.1f); %zu/200 assignments equal the exhaustive optimum in %.2f s", m.recall,
                  m.precision, m.f_score, 200 - mismatched, dt);
  return v;
}

// ---------------------------------------------------------------- 5

double understory_recall(const std::vector<treeseg::Crown>& crowns, const forge::Forest& f, const BBox& extent) {
  std::vector<eval::CrownSummary> s;
  for (const auto& c : crowns) s.push_back(eval::summarize(c));
  const auto r = eval::match_trees(std::span<const eval::CrownSummary>(s), f.truth.stems, rectangle(extent));
  for (const auto& cls : eval::report_classes())
    if (cls.name == "understory") return eval::metrics(eval::class_counts(r, s, f.truth.stems, cls)).recall;
  return 0.0;
}

Verdict segmentation() {
  Verdict v;
  const treeseg::SegConfig cfg;
  std::size_t stands = 0, exact = 0;
  double worst_purity = 1.0;
  for (std::size_t n : {1, 2, 3, 5, 8, 12, 17, 24, 31, 40, 50})
    for (auto shape : {forge::CrownShape::cone, forge::CrownShape::ellipsoid}) {
      ++stands;
      const std::uint64_t seed = 100 + n * 2 + (shape == forge::CrownShape::cone ? 0 : 1);
      const auto f = forge::generate_forest(support::separated_stand(n, shape, seed, 10.0));
      const auto crowns = treeseg::segment_cloud(support::above_ground(f), cfg).crowns;
      const char* sh = forge::to_string(shape);
      v.require(crowns.size() == n, fmt("%zu %ss: %zu crowns", n, sh, crowns.size()));
      std::set<std::size_t> trees;
      bool pure = true;
      for (const auto& c : crowns) {
        const auto p = support::crown_purity(c, f.truth);
        worst_purity = std::min(worst_purity, p.share);
        pure = pure && p.share >= kPurityMin;
        v.require(p.share >= kPurityMin, fmt("%zu %ss: crown %zu purity %.3f", n, sh, c.id, p.share));
        v.require(trees.insert(p.tree).second, fmt("%zu %ss: tree %zu split across crowns", n, sh, p.tree));
      }
      exact += crowns.size() == n && trees.size() == n && pure;
    }

  // two stories, understory tops >= 8 m below the overstory crown base
  std::vector<std::string> recalls;
  for (std::uint64_t seed : {5, 6, 7}) {
    const auto spec = support::storied_stand({{{26, 30}, {0.3, 0.3}, 10.0, forge::CrownShape::ellipsoid, 0.7},
                                              {{8, 10}, {0.5, 0.6}, 6.0, forge::CrownShape::ellipsoid, 0.3}},
                                             BBox::of(0, 0, 60, 60), 10.0, seed);
    const auto f = forge::generate_forest(spec);
    const PointCloud cloud = support::above_ground(f);
    const double plain = understory_recall(treeseg::segment_cloud(cloud, cfg).crowns, f, spec.extent);
    const auto layers = strata::stratify(remove_ground(cloud), strata::StrataConfig{});
    const double layered = understory_recall(strata::segment_layers(layers, cfg).crowns, f, spec.extent);
    v.require(layered > plain, fmt("seed %llu: understory recall %.3f stratified vs %.3f plain",
                                   (unsigned long long)seed, layered, plain));
    recalls.push_back(fmt("%.2f->%.2f", plain, layered));
  }
  std::string r;
  for (const auto& s : recalls) r += (r.empty() ? "" : ", ") + s;
  v.summary = fmt("%zu/%zu separated stands segmented exactly (worst purity %.3f); understory recall plain->stratified %s",
                  exact, stands, worst_purity, r.c_str());
  return v;
}

// ---------------------------------------------------------------- 6

double median_z(const PointCloud& c) {
  std::vector<double> z;
  for (const Point3D& p : c.points) z.push_back(p.z);
  return stats::median(z);
}

// Smallest vertical gap between a story's lowest crown base and the tallest
// tree of the story below.
double story_gap(const std::vector<support::Story>& stories) {
  double gap = INFINITY;
  for (std::size_t k = 0; k + 1 < stories.size(); ++k) {
    const auto& s = stories[k];
    const double base = s.height.lo * (1.0 - s.crown_ratio.hi);
    gap = std::min(gap, base - stories[k + 1].height.hi);
  }
  return gap;
}

Verdict stratification() {
  Verdict v;
  const strata::StrataConfig cfg;
  double worst_sep = 0.0, worst_deep = 0.0;
  std::size_t matched_layers = 0, separated = 0;
  std::map<int, int> by_stories;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed * 7919);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 1 + static_cast<int>(seed % 4);
    ++by_stories[n];
    // even seeds: shallow crowns; odd seeds: crown depth a share of height
    const bool shallow = seed % 2 == 0;
    std::vector<support::Story> stories;
    std::vector<double> weight(static_cast<std::size_t>(n));
    double wsum = 0.0;
    for (double& w : weight) wsum += (w = 0.5 + u(rng));
    double top = 14.0 * n + 6.0 + 4.0 * u(rng);
    for (int k = 0; k < n; ++k) {
      const auto shape = u(rng) < 0.5 ? forge::CrownShape::cone : forge::CrownShape::ellipsoid;
      const forge::Range ratio = shallow ? forge::Range{2.5 / top, 4.0 / top} : forge::Range{0.15, 0.25};
      stories.push_back({{top - 2, top}, ratio, 10.0 - 2.0 * k, shape, weight[static_cast<std::size_t>(k)] / wsum});
      top -= 14.0;
    }
    const double gap = story_gap(stories);
    const double density = 10.0 + 4.0 * u(rng);
    const auto f = forge::generate_forest(support::storied_stand(stories, BBox::of(0, 0, 40, 40), density, seed));
    const PointCloud cloud = remove_ground(support::above_ground(f));
    const auto out = strata::stratify_detailed(cloud, cfg);
    const std::string tag = fmt("stand %llu (%d stories)", (unsigned long long)seed, n);

    // partition: every input point exactly once
    std::multiset<PointId> seen;
    for (const auto& l : out.layers)
      for (const Point3D& p : l.points.points) seen.insert(p.id);
    for (const Point3D& p : out.below_top) seen.insert(p.id);
    for (const Point3D& p : out.remainder) seen.insert(p.id);
    std::multiset<PointId> all;
    for (const Point3D& p : cloud.points) all.insert(p.id);
    v.require(seen == all, tag + ": layers do not partition the cloud");

    // ordering: indices 1..k from the top down
    v.require(!out.layers.empty(), tag + ": no layers");
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
      v.require(out.layers[i].index == static_cast<int>(i) + 1, tag + ": layer index out of order");
      v.require(!out.layers[i].points.empty(), tag + ": empty layer");
      if (i) {
        v.require(median_z(out.layers[i - 1].points) > median_z(out.layers[i].points), tag + ": layers not top-down");
      }
    }
    matched_layers += out.layers.size() == static_cast<std::size_t>(n);

    std::map<PointId, int> layer_of;
    for (const auto& l : out.layers)
      for (const Point3D& p : l.points.points) layer_of[p.id] = l.index;
    const double off = forge::truth_layer_report(f.truth, layer_of).off_diagonal_fraction();
    if (gap >= kStoryGapMin) {
      ++separated;
      worst_sep = std::max(worst_sep, off);
      v.require(off < kContaminationMax, fmt("%s, gap %.1f m: contamination %.4f", tag.c_str(), gap, off));
    } else {
      worst_deep = std::max(worst_deep, off);
    }
  }
  v.summary = fmt("100 stands (%d/%d/%d/%d with 1-4 stories): partition and order hold, %zu/100 found every story; "
                  "worst contamination %.4f on %zu separated stands (%.4f on the rest, not bounded)",
                  by_stories[1], by_stories[2], by_stories[3], by_stories[4], matched_layers, worst_sep, separated,
                  worst_deep);
  return v;
}

// ---------------------------------------------------------------- 7

using CrownSet = std::multiset<std::vector<PointId>>;

CrownSet as_set(const std::vector<treeseg::Crown>& crowns) {
  CrownSet out;
  for (const auto& c : crowns) out.insert(c.member_ids());
  return out;
}

dist::DistResult run_tiled(const PointCloud& cloud, const BBox& extent, double tile, std::size_t workers) {
  dist::TileMap map = dist::build_tile_map(extent, tile);
  map.set_afp(dist::global_afp(cloud.size(), map));
  dist::DistConfig cfg;
  cfg.workers = workers;
  return dist::run_distributed(map, dist::memory_loader(cloud, map), cfg);
}

std::size_t field_value(const std::string& summary, const std::string& key) {
  const auto at = summary.find(key + "=");
  return std::stoul(summary.substr(at + key.size() + 1));
}

std::string job_name(const std::string& summary) {
  const auto at = summary.find("job=") + 4;
  return summary.substr(at, summary.find(' ', at) - at);
}

// Message counts and safety rules, read back from the run's log.
void check_log(Verdict& v, const dist::DistResult& r, std::size_t workers, const std::string& tag) {
  std::map<std::string, const dist::BoundaryJob*> jobs;
  std::size_t live = 0;
  for (const auto& j : r.map.jobs()) {
    jobs[j.id.name()] = &j;
    live += !j.empty;
  }
  const std::size_t tiles = r.map.tiles().size();
  std::map<std::string, std::size_t> n;
  std::set<std::size_t> assigned, completed, finished;
  std::set<std::string> dispatched, answered;
  std::map<std::size_t, bool> busy;
  for (const auto& rec : r.log) {
    ++n[rec.kind];
    if (rec.kind == "PT") {
      const std::size_t t = field_value(rec.summary, "tile");
      v.require(assigned.insert(t).second, tag + ": tile assigned twice");
      v.require(!busy[rec.worker], tag + ": worker given a second task");
      busy[rec.worker] = true;
    } else if (rec.kind == "TC") {
      const std::size_t t = field_value(rec.summary, "tile");
      v.require(assigned.count(t) && completed.insert(t).second, tag + ": unexpected TC");
      busy[rec.worker] = false;
    } else if (rec.kind == "PB") {
      const std::string j = job_name(rec.summary);
      v.require(jobs.count(j) && !jobs.at(j)->empty, tag + ": PB for an unknown or empty job " + j);
      v.require(dispatched.insert(j).second, tag + ": job dispatched twice");
      if (jobs.count(j))
        for (const auto& p : jobs.at(j)->parts) v.require(completed.count(p.tile), tag + ": PB before TC for " + j);
      v.require(!busy[rec.worker], tag + ": worker given a second task");
      busy[rec.worker] = true;
    } else if (rec.kind == "BC") {
      const std::string j = job_name(rec.summary);
      v.require(dispatched.count(j) && answered.insert(j).second, tag + ": unexpected BC " + j);
      busy[rec.worker] = false;
    } else if (rec.kind == "FIN") {
      v.require(completed.size() == tiles && answered.size() == live, tag + ": FIN before all work finished");
      v.require(finished.insert(rec.worker).second, tag + ": worker finalized twice");
    } else {
      v.require(false, tag + ": unexpected " + rec.kind + " record");
    }
  }
  v.require(n["PT"] == tiles && n["TC"] == tiles, fmt("%s: PT/TC %zu/%zu for %zu tiles", tag.c_str(), n["PT"], n["TC"], tiles));
  v.require(n["PB"] == live && n["BC"] == live, fmt("%s: PB/BC %zu/%zu for %zu jobs", tag.c_str(), n["PB"], n["BC"], live));
  v.require(n["FIN"] == workers, fmt("%s: %zu FIN for %zu workers", tag.c_str(), n["FIN"], workers));
  v.require(r.log.size() == 2 * tiles + 2 * live + workers, tag + ": extra messages");
}

PointCloud clip(const PointCloud& cloud, const BBox& box) {
  std::vector<Point3D> pts;
  for (const Point3D& p : cloud.points)
    if (box.contains(p.x, p.y)) pts.push_back(p);
  return PointCloud::with_extent(std::move(pts), box, cloud.frame);
}

PointCloud lone_cone_block(const BBox& extent, Vec2 at, std::uint64_t seed) {
  forge::ForestSpec spec;
  spec.extent = extent;
  spec.pulse_density = 10.0;
  spec.seed = seed;
  forge::TreeSpec t;
  t.x = at.x;
  t.y = at.y;
  t.height = 20.0;
  t.crown_radius = 4.0;
  t.crown_base = 8.0;
  spec.trees.push_back(t);
  return support::above_ground(forge::generate_forest(spec));
}

Verdict distributed() {
  Verdict v;

  // 1x1 .. 6x6 maps of 12 m tiles over one stand
  forge::ForestSpec spec;
  spec.extent = BBox::of(0, 0, 72, 72);
  spec.pulse_density = 10.0;
  spec.seed = 77;
  forge::StandSpec st;
  st.density_per_ha = 140;
  st.min_spacing = 5.0;
  spec.stands.push_back(st);
  const PointCloud stand = support::above_ground(forge::generate_forest(spec));
  std::size_t maps = 0, runs = 0;
  for (std::size_t cols = 1; cols <= 6; ++cols)
    for (std::size_t rows = 1; rows <= 6; ++rows) {
      ++maps;
      const BBox box = BBox::of(0, 0, 12.0 * static_cast<double>(cols), 12.0 * static_cast<double>(rows));
      const PointCloud cloud = clip(stand, box);
      std::optional<CrownSet> ref;
      for (std::size_t workers : {1, 2, 8}) {
        ++runs;
        const std::string tag = fmt("%zux%zu/%zu workers", cols, rows, workers);
        const auto r = run_tiled(cloud, box, 12.0, workers);
        check_log(v, r, workers, tag);
        const CrownSet got = as_set(r.output.crowns);
        if (!ref) ref = got;
        v.require(got == *ref, tag + ": crowns differ from 1 worker");
      }
    }

  // whole block vs 2x2 tiles
  const auto sep_spec = support::separated_stand(16, forge::CrownShape::ellipsoid, 8, 8.0, 10.0, 1.0);
  const PointCloud sep = support::above_ground(forge::generate_forest(sep_spec));
  const double tile = 20.0;
  const auto tiled = run_tiled(sep, sep_spec.extent, tile, 2);
  const double afp = tiled.map.afp();
  const auto whole = dist::segment_block(sep, tiled.map.origin(), afp, treeseg::SegConfig{});
  double reach = 0.0;
  for (const auto& c : whole) reach = std::max(reach, c.max_radius);
  for (const auto& c : tiled.output.crowns) reach = std::max(reach, c.max_radius);
  reach += 2.0 * afp;
  auto in_band = [&](const treeseg::Crown& c) {
    double best = INFINITY;
    const BBox& e = sep_spec.extent;
    for (double k = e.xmin + tile; k < e.xmax - 1e-9; k += tile) best = std::min(best, std::abs(c.apex.x - k));
    for (double k = e.ymin + tile; k < e.ymax - 1e-9; k += tile) best = std::min(best, std::abs(c.apex.y - k));
    return best <= reach;
  };
  const CrownSet a = as_set(whole), b = as_set(tiled.output.crowns);
  std::size_t diff = 0;
  for (const auto& c : whole)
    if (!b.count(c.member_ids())) ++diff, v.require(in_band(c), "whole-only crown outside the boundary bands");
  for (const auto& c : tiled.output.crowns)
    if (!a.count(c.member_ids())) ++diff, v.require(in_band(c), "tiled-only crown outside the boundary bands");

  // straddling cones
  const auto edge = run_tiled(lone_cone_block(BBox::of(0, 0, 40, 20), {20, 10}, 11), BBox::of(0, 0, 40, 20), 20, 2);
  const auto corner = run_tiled(lone_cone_block(BBox::of(0, 0, 40, 40), {20, 20}, 12), BBox::of(0, 0, 40, 40), 20, 3);
  v.require(edge.output.crowns.size() == 1, fmt("edge cone gave %zu crowns", edge.output.crowns.size()));
  v.require(corner.output.crowns.size() == 1, fmt("corner cone gave %zu crowns", corner.output.crowns.size()));

  const long long bias = dist::bias_estimate(446.23, 96);
  v.require(bias == 42838, fmt("bias %lld", bias));

  // desk-scale block
  const auto t0 = Clock::now();
  forge::ForestSpec big;
  big.extent = BBox::of(0, 0, 1000, 1000);
  big.pulse_density = 10.0;
  big.seed = 1;
  forge::StandSpec bs;
  bs.density_per_ha = 150;
  bs.min_spacing = 5.0;
  big.stands.push_back(bs);
  std::size_t trees = 0, points = 0, crowns = 0;
  {
    const auto f = forge::generate_forest(big);
    trees = f.truth.trees.size();
    const PointCloud cloud = support::above_ground(f);
    points = cloud.size();
    const auto r = run_tiled(cloud, big.extent, 250.0, 8);
    crowns = r.output.crowns.size();
    check_log(v, r, 8, "1 km2");
  }
  const double dt = seconds_since(t0);
  v.require(dt < kBlockSeconds, fmt("1 km2 block took %.1f s", dt));

  v.summary = fmt(
      "%zu maps x {1,2,8} workers (%zu runs) with exact counts, safe logs and identical crowns; 2x2 diff %zu crowns, "
      "all in bands; straddling edge/corner cones give %zu/%zu crown; bias %lld (published 42,833); "
      "1 km2 (%zu points, %zu trees -> %zu crowns) in %.0f s",
      maps, runs, diff, edge.output.crowns.size(), corner.output.crowns.size(), bias, points, trees, crowns, dt);
  return v;
}

// ---------------------------------------------------------------- 8

struct Cli {
  int code;
  std::string err;
};

Cli cli(const std::vector<std::string>& args) {
  std::ostringstream o, e;
  const int code = app::run_cli(args, o, e);
  return {code, e.str()};
}

// The protocol log minus its wall-clock column.
std::string without_clock(const fs::path& p) {
  std::string out;
  for (const std::string& line : support::lines_of(p)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out += line.substr(0, a) + line.substr(b) + "\n";
  }
  return out;
}

Verdict replay() {
  Verdict v;
  support::TempDir dir("acceptance");
  const std::string d = dir.path().string();
  std::ofstream(dir / "spec.json") << R"({"extent":[0,0,60,60],"pulse_density":10,"seed":4,"layer_fractions":[0.7,0.3],
    "ground":{"base_elevation":200,"relief_amplitude":1.5,"relief_wavelength":80},
    "stands":[{"count":36,"placement":"grid","min_spacing":10,"height":[26,30],"crown_ratio":[0.3,0.3],
               "crown_radius":[7.2,7.6],"shape":"ellipsoid","story":1},
              {"count":100,"placement":"grid","min_spacing":6,"height":[8,10],"crown_ratio":[0.5,0.6],
               "crown_radius":[4.32,4.56],"shape":"ellipsoid","story":2}]})";
  std::ofstream(dir / "plots.csv") << "plot_id,center_x,center_y,radius_m\nwest,18,30,14\neast,42,30,14\n";
  const std::string f = d + "/forest";
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
      {"forge", {"--seed", "4", "--out", f, "forge", "--spec", d + "/spec.json", "--tile-size", "30"}},
      {"segment", {"--out", d + "/seg", "segment", "--cloud", f + "/cloud.txt", "--dem", f + "/dem.asc"}},
      {"stratify",
       {"--out", d + "/strata", "stratify", "--cloud", f + "/cloud.txt", "--dem", f + "/dem.asc", "--then-segment"}},
      {"occlusion", {"--out", d + "/occ", "occlusion", "--layers", d + "/strata/layers.csv", "--pcd-min", "4"}},
      {"evaluate",
       {"--out", d + "/eval", "evaluate", "--crowns", d + "/seg/crowns.csv", "--stems", f + "/stems.csv", "--plots",
        d + "/plots.csv"}},
      {"dist",
       {"--out", d + "/dist", "dist", "--tiles", f + "/layout.json", "--dem", f + "/dem.asc", "--workers", "1", "--log",
        "protocol.log"}},
  };
  std::size_t files = 0;
  std::string commands;
  for (const auto& [name, args] : runs) {
    const Cli first = cli(args);
    v.require(first.code == 0, name + " failed: " + first.err);
    if (first.code != 0) continue;
    const fs::path out = args[std::find(args.begin(), args.end(), "--out") - args.begin() + 1];
    const fs::path again = dir / ("replay-" + name);
    const Cli second = cli({"--out", again.string(), "replay", (out / "manifest.json").string()});
    v.require(second.code == 0, name + " replay failed: " + second.err);
    if (second.code != 0) continue;
    const auto m1 = app::read_manifest(out / "manifest.json"), m2 = app::read_manifest(again / "manifest.json");
    v.require(m1.outputs.size() == m2.outputs.size() && !m1.outputs.empty(), name + ": output lists differ");
    for (const auto& o : m1.outputs) {
      ++files;
      if (o.path == "protocol.log") {
        v.require(without_clock(out / o.path) == without_clock(again / o.path), name + ": protocol log differs");
        continue;
      }
      v.require(support::slurp(out / o.path) == support::slurp(again / o.path), name + ": " + o.path + " differs");
    }
    commands += (commands.empty() ? "" : ",") + name;
  }
  v.summary = fmt("%s replayed from their manifests, %zu output files byte-identical (protocol.log compared "
                  "without its wall_clock column)",
                  commands.c_str(), files);
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, Verdict (*)()>> criteria{{1, profile_counts}, {2, window_endpoints},
                                                           {3, occlusion_chain}, {4, matching},
                                                           {5, segmentation},   {6, stratification},
                                                           {7, distributed},    {8, replay}};
  int failed = 0;
  for (const auto& [n, run] : criteria) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = run();
    } catch (const std::exception& e) {
      v.ok = false;
      v.failures.push_back(std::string("exception: ") + e.what());
    }
    std::printf("[%s] criterion %d: %s (%.1f s)\n", v.ok ? "PASS" : "FAIL", n, v.summary.c_str(), seconds_since(t0));
    for (const auto& f : v.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
    failed += !v.ok;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
