#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "canopy/app/config.hpp"
#include "canopy/app/formats.hpp"
#include "canopy/app/manifest.hpp"
#include "canopy/app/svg.hpp"
#include "canopy/core/io.hpp"
#include "canopy/core/preprocess.hpp"
#include "canopy/dist/runtime.hpp"
#include "canopy/eval/match.hpp"
#include "canopy/forge/forest.hpp"
#include "canopy/forge/spec_json.hpp"
#include "canopy/occlusion/fractions.hpp"
#include "canopy/strata/layered.hpp"
#include "canopy/strata/stratify.hpp"
#include "canopy/treeseg/segment.hpp"

namespace canopy::app {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kInputError = 2, kInternalError = 3 };

// State shared by one command invocation.
struct Run {
  Settings settings;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  fs::path out;
  std::ostream* log = nullptr;
  RunManifest manifest;

  void input(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw InvalidInput("input file not found: " + p.string());
    manifest.inputs.push_back({p.generic_string(), file_hash(p)});
  }

  template <typename Fn>
  void output(const std::string& name, Fn&& body) {
    const fs::path p = out / name;
    io::write_file_atomic(p, std::forward<Fn>(body));
    manifest.outputs.push_back({name, file_hash(p)});
  }
};

// ---- option blocks ----

struct SegmentArgs {
  std::string cloud, dem;
};
struct StratifyArgs {
  std::string cloud, dem;
  bool then_segment = false;
};
struct OcclusionArgs {
  std::string layers;
  double pcd_min = 0.0;
  std::optional<double> theta, pcd;
};
struct EvaluateArgs {
  std::string crowns, stems, plot, plots;
};
struct DistArgs {
  std::string tiles, log, dem;
  std::size_t workers = 1;
  bool strata = false;
};
struct ForgeArgs {
  std::string spec;
  std::optional<double> tile_size;
};

// ---- shared steps ----

inline PointCloud load_above_ground(Run& run, const std::string& cloud_path, const std::string& dem_path) {
  run.input(cloud_path);
  if (!dem_path.empty()) run.input(dem_path);
  PointCloud cloud = io::read_point_cloud(fs::path(cloud_path));
  if (cloud.frame == HeightFrame::above_ground) {
    if (!dem_path.empty()) throw InvalidInput(cloud_path + " is already height-normalized; drop --dem");
    return cloud;
  }
  if (dem_path.empty()) throw InvalidInput(cloud_path + " holds absolute elevations; --dem is required");
  const Dem dem = io::read_esri_ascii(fs::path(dem_path));
  NormalizeResult norm = normalize_heights(cloud, dem);
  if (norm.outside_dem)
    *run.log << "warning: " << norm.outside_dem << " points outside the DEM took border elevations\n";
  return std::move(norm.cloud);
}

inline void write_crown_outputs(Run& run, const std::vector<treeseg::Crown>& crowns, bool with_layer,
                                const BBox& extent) {
  run.output("crowns.csv", [&](std::ostream& o) { write_crowns(o, crowns, with_layer); });
  run.output("labels.csv", [&](std::ostream& o) { write_labels(o, crowns); });
  run.output("crown_map.svg", [&](std::ostream& o) { svg::crown_map(o, crowns, extent); });
}

inline std::vector<treeseg::Crown> renumber(std::vector<treeseg::Crown> crowns) {
  for (std::size_t i = 0; i < crowns.size(); ++i) crowns[i].id = i + 1;
  return crowns;
}

// ---- commands ----

inline void cmd_segment(Run& run, const SegmentArgs& a) {
  const PointCloud cloud = load_above_ground(run, a.cloud, a.dem);
  const treeseg::SegmentOutcome seg = treeseg::segment_cloud(cloud, run.settings.seg);
  write_crown_outputs(run, seg.crowns, false, cloud.extent);
  *run.log << "crowns " << seg.crowns.size() << ", noise points " << seg.noise.size() << ", low points "
           << seg.low.size() << '\n';
}

inline void cmd_stratify(Run& run, const StratifyArgs& a) {
  const PointCloud cloud = load_above_ground(run, a.cloud, a.dem);
  const PointCloud veg = remove_ground(cloud);
  strata::StrataConfig cfg = run.settings.strata;
  cfg.threads = run.threads;
  const strata::StratifyOutcome out = strata::stratify_detailed(veg, cfg);

  for (const strata::CanopyLayer& l : out.layers)
    run.output("layer_" + std::to_string(l.index) + ".txt",
               [&](std::ostream& o) { io::write_point_cloud(o, l.points, true); });
  const double pcd = cloud.empty() ? 0.0 : point_density(cloud);
  run.output("layers.csv", [&](std::ostream& o) {
    write_layers(o, strata::layer_stats(out.layers), cloud.size(), pcd);
  });

  // Whole-cloud histogram for the plot.
  double top = 0.0;
  for (const Point3D& p : veg.points) top = std::max(top, p.z);
  const auto nbins = static_cast<std::size_t>((top + 3.0 * cfg.kernel_sigma) / cfg.histogram_bin) + 1;
  strata::HeightHistogram h = strata::empty_histogram(cfg.histogram_bin, nbins);
  for (const Point3D& p : veg.points) h.counts[strata::height_bin(p.z, h.bin, nbins)] += 1.0;
  const std::vector<double> smoothed = strata::smooth_histogram(h, cfg.kernel_sigma);
  const std::vector<strata::HeightRange> ranges = strata::salient_layers(h, cfg.kernel_sigma);
  run.output("height_histogram.svg", [&](std::ostream& o) { svg::height_histogram(o, h, smoothed, ranges); });

  *run.log << "layers " << out.layers.size() << ", below minimum top " << out.below_top.size()
           << " points, remainder " << out.remainder.size() << " points\n";
  if (a.then_segment) {
    const strata::LayeredSegmentation seg = strata::segment_layers(out.layers, run.settings.seg);
    write_crown_outputs(run, seg.crowns, true, cloud.extent);
    *run.log << "crowns " << seg.crowns.size() << '\n';
  }
}

inline void cmd_occlusion(Run& run, const OcclusionArgs& a) {
  if (!(a.pcd_min > 0.0)) throw InvalidInput("--pcd-min must be positive");
  if (a.theta && !(*a.theta > 0.0 && *a.theta < 1.0)) throw InvalidInput("--theta must lie in (0, 1)");
  run.input(a.layers);
  const LayerTable table = read_layers(a.layers);
  const std::optional<double> pcd = a.pcd ? a.pcd : table.cloud_density;
  if (!pcd || !(*pcd > 0.0)) throw InvalidInput("no positive point density: pass --pcd or a layers.csv with a cloud row");

  std::vector<occlusion::DensityObservation> obs;
  for (const auto& [n, d] : table.densities)
    if (n <= occlusion::kFractionHorizon) obs.push_back({n, d / *pcd});
  double theta = 0.0;
  if (a.theta) {
    theta = *a.theta;
  } else {
    if (obs.empty()) throw InvalidInput(a.layers + ": no layers to fit");
    const occlusion::FitResult fit = occlusion::fit_log_series(obs);
    theta = fit.model.theta();
    *run.log << "fitted theta " << io::fixed(theta, 6) << " (mse " << io::fmt(fit.mse) << ")"
             << (fit.at_bound ? " at the search bound" : "") << '\n';
  }
  const occlusion::LogSeriesModel model(theta);
  const auto rows = occlusion::occlusion_report(obs, model, a.pcd_min);
  run.output("occlusion-report.csv", [&](std::ostream& o) { write_occlusion_report(o, rows, a.pcd_min); });
  run.output("fraction_fit.svg", [&](std::ostream& o) { svg::fraction_fit(o, rows, theta); });
}

inline void cmd_evaluate(Run& run, const EvaluateArgs& a) {
  if (a.plot.empty() == a.plots.empty()) throw InvalidInput("give exactly one of --plot or --plots");
  run.input(a.crowns);
  run.input(a.stems);
  std::vector<Plot> plots;
  if (!a.plots.empty()) {
    run.input(a.plots);
    plots = read_plots(a.plots);
  } else {
    const auto f = io::split_csv(a.plot);
    double v[4];
    if (f.size() != 4) throw InvalidInput("--plot expects xmin,ymin,xmax,ymax");
    for (int i = 0; i < 4; ++i)
      if (!io::parse_number(f[static_cast<std::size_t>(i)], v[i])) throw InvalidInput("--plot: bad number");
    if (!(v[2] > v[0] && v[3] > v[1])) throw InvalidInput("--plot needs positive area");
    plots.push_back({"plot", rectangle(BBox::of(v[0], v[1], v[2], v[3]))});
  }
  std::vector<eval::CrownSummary> crowns;
  for (const CrownRow& r : read_crowns(a.crowns)) crowns.push_back(r.summary);
  const std::vector<eval::StemRecord> stems = read_stems(a.stems);

  const auto classes = eval::report_classes();
  std::vector<MetricsRow> rows;
  std::vector<eval::Counts> total(classes.size());
  for (const Plot& plot : plots) {
    std::vector<eval::StemRecord> in_plot;
    for (const eval::StemRecord& s : stems)
      if (plot.shape.contains({s.x, s.y})) in_plot.push_back(s);
    const eval::MatchResult m = eval::match_trees(crowns, in_plot, plot.shape, run.settings.score);
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const eval::Counts c = eval::class_counts(m, crowns, in_plot, classes[k]);
      rows.push_back({plot.id, classes[k].name, c});
      total[k].mt += c.mt;
      total[k].oe += c.oe;
      total[k].ce += c.ce;
    }
    const eval::Metrics all = eval::metrics(m);
    *run.log << plot.id << ": MT " << m.mt() << " OE " << m.oe() << " CE " << m.ce() << " recall "
             << io::fixed(all.recall, 3) << " precision " << io::fixed(all.precision, 3) << '\n';
  }
  for (std::size_t k = 0; k < classes.size(); ++k) rows.push_back({"all", classes[k].name, total[k]});
  run.output("metrics.csv", [&](std::ostream& o) { write_metrics(o, rows); });
}

// Reads the tiles overlapping a tile's halo from their files.
inline dist::TileLoader file_loader(const TileLayout& layout, const dist::TileMap& map, const std::optional<Dem>& dem) {
  return [&layout, &map, &dem](std::size_t tile, double halo) {
    const BBox own = map.tile(tile).extent;
    const BBox box = own.inflated(halo);
    std::vector<Point3D> pts;
    for (const TileEntry& e : layout.tiles) {
      if (!e.footprint.extent.intersects(box)) continue;
      PointCloud c = io::read_point_cloud(e.path);
      if (c.frame == HeightFrame::absolute) {
        if (!dem) throw InvalidInput(e.path.string() + " holds absolute elevations; --dem is required");
        c = normalize_heights(c, *dem).cloud;
      }
      for (const Point3D& p : c.points)
        if (box.contains(p.x, p.y)) pts.push_back(p);
    }
    return PointCloud::with_extent(std::move(pts), own, HeightFrame::above_ground);
  };
}

inline void cmd_dist(Run& run, const DistArgs& a) {
  if (a.workers == 0) throw InvalidInput("--workers must be >= 1");
  run.input(a.tiles);
  const TileLayout layout = read_tile_layout(a.tiles);
  std::optional<Dem> dem;
  if (!a.dem.empty()) {
    run.input(a.dem);
    dem = io::read_esri_ascii(fs::path(a.dem));
  }
  std::vector<dist::TileFootprint> footprints;
  for (const TileEntry& e : layout.tiles) {
    run.input(e.path);
    footprints.push_back(e.footprint);
  }
  const dist::TileMap map = dist::tile_map_from_layout(footprints, layout.tile_size);

  dist::DistConfig cfg;
  cfg.workers = a.workers;
  cfg.seg = run.settings.seg;
  cfg.timeout_factor = run.settings.timeout_factor;
  cfg.min_timeout = std::chrono::milliseconds(static_cast<long long>(run.settings.min_timeout_ms));

  std::vector<treeseg::Crown> crowns;
  std::vector<dist::LogRecord> log;
  std::size_t collisions = 0;
  auto absorb = [&](dist::DistResult r, int layer) {
    for (treeseg::Crown& c : r.output.crowns) {
      c.layer = layer;
      crowns.push_back(std::move(c));
    }
    for (dist::LogRecord& rec : r.log) {
      rec.seq = log.size();
      if (layer) rec.summary = "layer=" + std::to_string(layer) + (rec.summary.empty() ? "" : " " + rec.summary);
      log.push_back(std::move(rec));
    }
    collisions += r.output.collisions;
  };

  if (!a.strata) {
    const dist::TileLoader loader = file_loader(layout, map, dem);
    std::size_t count = 0;
    for (const TileEntry& e : layout.tiles) count += io::read_point_cloud(e.path).size();
    dist::TileMap m = map;
    m.set_afp(dist::global_afp(count, m));
    absorb(dist::run_distributed(m, loader, cfg), 0);
  } else {
    // Layers come from the whole mosaic; each layer then runs the protocol.
    const dist::TileLoader loader = file_loader(layout, map, dem);
    std::vector<Point3D> all;
    for (const dist::Tile& t : map.tiles()) {
      const PointCloud c = loader(t.id, 0.0);
      for (const Point3D& p : c.points)
        if (map.tile_of(p.x, p.y) == t.id) all.push_back(p);
    }
    const PointCloud mosaic = PointCloud::with_extent(std::move(all), map.extent(), HeightFrame::above_ground);
    strata::StrataConfig scfg = run.settings.strata;
    scfg.threads = run.threads;
    const std::vector<strata::CanopyLayer> layers = strata::stratify(remove_ground(mosaic), scfg);
    for (const strata::CanopyLayer& l : layers) {
      if (l.points.empty()) continue;
      dist::TileMap m = map;
      m.set_afp(dist::global_afp(l.points.size(), m));
      absorb(dist::run_distributed(m, dist::memory_loader(l.points, m), cfg), l.index);
    }
  }
  crowns = renumber(std::move(crowns));
  write_crown_outputs(run, crowns, a.strata, map.extent());
  if (!a.log.empty()) run.output(a.log, [&](std::ostream& o) { dist::write_protocol_log(o, log); });
  *run.log << "crowns " << crowns.size() << ", tiles " << map.tiles().size() << ", boundary jobs " << map.jobs().size()
           << ", member collisions " << collisions << '\n';
}

inline void cmd_forge(Run& run, const ForgeArgs& a) {
  run.input(a.spec);
  forge::ForestSpec spec = forge::read_forest_spec(a.spec);
  if (run.seed_given) spec.seed = run.seed;
  const forge::Forest f = forge::generate_forest(spec);
  run.output("cloud.txt", [&](std::ostream& o) { io::write_point_cloud(o, f.cloud, true); });
  run.output("dem.asc", [&](std::ostream& o) { io::write_esri_ascii(o, f.dem); });
  run.output("stems.csv", [&](std::ostream& o) { write_stems(o, f.truth.stems); });
  run.output("truth_labels.csv", [&](std::ostream& o) { write_truth_labels(o, f.truth); });
  if (a.tile_size) {
    if (!(*a.tile_size > 0.0)) throw InvalidInput("--tile-size must be positive");
    const dist::TileMap map = dist::build_tile_map(spec.extent, *a.tile_size);
    std::map<std::size_t, std::vector<Point3D>> buckets;
    for (const Point3D& p : f.cloud.points)
      if (const auto t = map.tile_of(p.x, p.y)) buckets[*t].push_back(p);
    TileLayout layout;
    layout.tile_size = *a.tile_size;
    for (const dist::Tile& t : map.tiles()) {
      const std::string name = "tiles/tile_" + std::to_string(t.id) + ".txt";
      const PointCloud c = PointCloud::with_extent(std::move(buckets[t.id]), t.extent, f.cloud.frame);
      run.output(name, [&](std::ostream& o) { io::write_point_cloud(o, c, true); });
      layout.tiles.push_back({{t.id, t.extent}, name});
    }
    run.output("layout.json", [&](std::ostream& o) { write_tile_layout(o, layout); });
  }
  *run.log << "trees " << f.truth.trees.size() << ", points " << f.cloud.size() << '\n';
}

// ---- entry point ----

namespace detail {

// Drops --out/--config (and their values) so the recorded command line does
// not pin the output directory or depend on the config file.
inline std::vector<std::string> replayable_args(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--out" || a == "--config") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0 || a.rfind("--config=", 0) == 0) continue;
    out.push_back(a);
  }
  return out;
}

inline int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                    const std::optional<std::map<std::string, std::string>>& config_snapshot,
                    const std::optional<fs::path>& out_override) {
  CLI::App app{"Individual tree segmentation, canopy stratification and evaluation for airborne LiDAR", "canopy"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_file, out_dir = ".";
  app.add_option("--seed", seed, "Random seed (forge)");
  app.add_option("--threads", threads, "Worker threads for per-cell and per-layer work")->check(CLI::PositiveNumber);
  app.add_option("--config", config_file, "Flat key = value settings file");
  app.add_option("--out", out_dir, "Output directory");

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Segment tree crowns from one canopy layer");
  c_seg->add_option("--cloud", seg.cloud, "Point file (x y z class [id])")->required();
  c_seg->add_option("--dem", seg.dem, "ESRI ASCII ground DEM");

  StratifyArgs strat;
  auto* c_strat = app.add_subcommand("stratify", "Split a cloud into canopy layers");
  c_strat->add_option("--cloud", strat.cloud, "Point file")->required();
  c_strat->add_option("--dem", strat.dem, "ESRI ASCII ground DEM");
  c_strat->add_flag("--then-segment", strat.then_segment, "Segment every layer and merge the crowns");

  OcclusionArgs occ;
  double theta = 0.0, pcd = 0.0;
  auto* c_occ = app.add_subcommand("occlusion", "Fit layer fractions and report minimum densities");
  c_occ->add_option("--layers", occ.layers, "layers.csv from stratify")->required();
  c_occ->add_option("--pcd-min", occ.pcd_min, "Minimum density needed for the top layer, pt/m2")->required();
  auto* o_theta = c_occ->add_option("--theta", theta, "Use this theta instead of fitting");
  auto* o_pcd = c_occ->add_option("--pcd", pcd, "Total point density, overrides the layers.csv cloud row");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Match crowns to a stem map");
  c_eval->add_option("--crowns", ev.crowns, "crowns.csv")->required();
  c_eval->add_option("--stems", ev.stems, "Stem map CSV")->required();
  c_eval->add_option("--plot", ev.plot, "Rectangular plot xmin,ymin,xmax,ymax");
  c_eval->add_option("--plots", ev.plots, "Plot CSV (circles or rectangles)");

  DistArgs di;
  auto* c_dist = app.add_subcommand("dist", "Tiled segmentation with boundary unification");
  c_dist->add_option("--tiles", di.tiles, "Tile layout JSON")->required();
  c_dist->add_option("--workers", di.workers, "Worker threads");
  c_dist->add_option("--log", di.log, "Protocol log file name, written under --out");
  c_dist->add_option("--dem", di.dem, "ESRI ASCII ground DEM for absolute-height tiles");
  c_dist->add_flag("--strata", di.strata, "Stratify first and run each layer through the protocol");

  ForgeArgs fo;
  double tile_size = 0.0;
  auto* c_forge = app.add_subcommand("forge", "Generate a synthetic forest and its ground truth");
  c_forge->add_option("--spec", fo.spec, "Forest spec JSON")->required();
  auto* o_tile = c_forge->add_option("--tile-size", tile_size, "Also split the cloud into square tiles");

  std::string manifest_path;
  auto* c_replay = app.add_subcommand("replay", "Rerun a command from its manifest");
  c_replay->add_option("manifest", manifest_path, "manifest.json")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (c_replay->parsed()) {
      const RunManifest m = read_manifest(manifest_path);
      fs::path dir = app.count("--out") ? fs::path(out_dir) : fs::path(m.out_dir);
      std::vector<std::string> again = m.args;
      return run_impl(again, out, err, m.config, dir);
    }

    const auto t0 = std::chrono::steady_clock::now();
    Run run;
    run.seed = seed;
    run.seed_given = app.count("--seed") > 0;
    run.threads = threads;
    run.out = out_override.value_or(fs::path(out_dir));
    run.log = &out;
    if (config_snapshot) {
      run.settings = settings_from(*config_snapshot, "manifest config");
    } else if (!config_file.empty()) {
      run.input(config_file);
      run.settings = settings_from(read_config_file(config_file), config_file);
    }
    run.settings.validate();
    fs::create_directories(run.out);

    std::string command;
    if (c_seg->parsed()) {
      command = "segment";
      cmd_segment(run, seg);
    } else if (c_strat->parsed()) {
      command = "stratify";
      cmd_stratify(run, strat);
    } else if (c_occ->parsed()) {
      command = "occlusion";
      if (o_theta->count()) occ.theta = theta;
      if (o_pcd->count()) occ.pcd = pcd;
      cmd_occlusion(run, occ);
    } else if (c_eval->parsed()) {
      command = "evaluate";
      cmd_evaluate(run, ev);
    } else if (c_dist->parsed()) {
      command = "dist";
      cmd_dist(run, di);
    } else if (c_forge->parsed()) {
      command = "forge";
      if (o_tile->count()) fo.tile_size = tile_size;
      cmd_forge(run, fo);
    }

    run.manifest.command = command;
    run.manifest.args = replayable_args(args);
    run.manifest.config = snapshot(run.settings);
    run.manifest.seed = seed;
    run.manifest.threads = threads;
    run.manifest.out_dir = run.out.generic_string();
    run.manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(run.out / "manifest.json", run.manifest);
    return kOk;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const EmptyInput& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace detail

// `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return detail::run_impl(args, out, err, std::nullopt, std::nullopt);
}

}  // namespace canopy::app
