#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "canopy/core/geometry.hpp"
#include "canopy/core/io.hpp"
#include "canopy/dist/tile_map.hpp"
#include "canopy/eval/match.hpp"
#include "canopy/forge/forest.hpp"
#include "canopy/occlusion/fractions.hpp"
#include "canopy/strata/stratify.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::app {

// Reads a CSV with a fixed header; `row` receives the fields and the 1-based line.
template <typename Fn>
void read_csv(const std::filesystem::path& path, const std::vector<std::string>& header, std::size_t min_fields,
              Fn&& row) {
  auto in = io::open_in(path);
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = io::split_csv(line);
    if (!seen_header) {
      seen_header = true;
      for (std::size_t i = 0; i < min_fields; ++i)
        if (i >= fields.size() || fields[i] != header[i])
          throw ParseError(path.string(), lineno, "expected header starting " + header[0] + "," + header[1]);
      continue;
    }
    if (fields.size() < min_fields || fields.size() > header.size())
      throw ParseError(path.string(), lineno, "expected " + std::to_string(min_fields) + " to " +
                                                  std::to_string(header.size()) + " fields");
    row(fields, lineno);
  }
  if (!seen_header) throw ParseError(path.string(), lineno, "missing header");
}

template <typename T>
T field(const std::string& text, const std::filesystem::path& path, std::size_t line, const char* what) {
  T v{};
  if (!io::parse_number(text, v)) throw ParseError(path.string(), line, std::string("bad ") + what + " '" + text + "'");
  return v;
}

// ---- crowns ----

inline void write_crowns(std::ostream& out, const std::vector<treeseg::Crown>& crowns, bool with_layer) {
  out << "tree_id,apex_x,apex_y,apex_height_m,hull_area_m2,max_radius_m,n_points" << (with_layer ? ",layer" : "")
      << '\n';
  for (const treeseg::Crown& c : crowns) {
    out << c.id << ',' << io::fmt(c.apex.x) << ',' << io::fmt(c.apex.y) << ',' << io::fmt(c.height) << ','
        << io::fmt(c.hull.area()) << ',' << io::fmt(c.max_radius) << ',' << c.members.size();
    if (with_layer) out << ',' << c.layer;
    out << '\n';
  }
}

inline void write_labels(std::ostream& out, const std::vector<treeseg::Crown>& crowns) {
  std::vector<std::pair<PointId, std::size_t>> rows;
  for (const treeseg::Crown& c : crowns)
    for (const Point3D& p : c.members) rows.emplace_back(p.id, c.id);
  std::sort(rows.begin(), rows.end());
  out << "point_id,tree_id\n";
  for (const auto& [pid, tid] : rows) out << pid << ',' << tid << '\n';
}

struct CrownRow {
  eval::CrownSummary summary;
  double hull_area = 0.0;
  double max_radius = 0.0;
  std::size_t points = 0;
  int layer = 0;
};

inline std::vector<CrownRow> read_crowns(const std::filesystem::path& path) {
  const std::vector<std::string> header{"tree_id", "apex_x",       "apex_y",   "apex_height_m",
                                        "hull_area_m2", "max_radius_m", "n_points", "layer"};
  std::vector<CrownRow> rows;
  read_csv(path, header, 7, [&](const std::vector<std::string>& f, std::size_t line) {
    CrownRow r;
    r.summary.id = field<std::size_t>(f[0], path, line, "tree_id");
    r.summary.x = field<double>(f[1], path, line, "apex_x");
    r.summary.y = field<double>(f[2], path, line, "apex_y");
    r.summary.height = field<double>(f[3], path, line, "apex_height_m");
    r.hull_area = field<double>(f[4], path, line, "hull_area_m2");
    r.max_radius = field<double>(f[5], path, line, "max_radius_m");
    r.points = field<std::size_t>(f[6], path, line, "n_points");
    if (f.size() == 8) r.layer = field<int>(f[7], path, line, "layer");
    rows.push_back(r);
  });
  return rows;
}

// ---- stems ----

inline void write_stems(std::ostream& out, const std::vector<eval::StemRecord>& stems) {
  out << "id,x,y,height_m,dbh_cm,crown_class\n";
  for (const eval::StemRecord& s : stems)
    out << s.id << ',' << io::fmt(s.x) << ',' << io::fmt(s.y) << ',' << io::fmt(s.height) << ','
        << (s.dbh_cm ? io::fmt(*s.dbh_cm) : "") << ',' << eval::to_string(s.crown_class) << '\n';
}

inline std::vector<eval::StemRecord> read_stems(const std::filesystem::path& path) {
  const std::vector<std::string> header{"id", "x", "y", "height_m", "dbh_cm", "crown_class"};
  std::vector<eval::StemRecord> stems;
  read_csv(path, header, 6, [&](const std::vector<std::string>& f, std::size_t line) {
    eval::StemRecord s;
    s.id = field<std::size_t>(f[0], path, line, "id");
    s.x = field<double>(f[1], path, line, "x");
    s.y = field<double>(f[2], path, line, "y");
    s.height = field<double>(f[3], path, line, "height_m");
    if (!f[4].empty()) s.dbh_cm = field<double>(f[4], path, line, "dbh_cm");
    try {
      s.crown_class = eval::crown_class_from(f[5]);
    } catch (const InvalidInput& e) {
      throw ParseError(path.string(), line, e.what());
    }
    stems.push_back(s);
  });
  return stems;
}

inline void write_truth_labels(std::ostream& out, const forge::GroundTruth& truth) {
  out << "point_id,tree_id,story\n";
  for (std::size_t i = 0; i < truth.labels.size(); ++i)
    out << i << ',' << truth.labels[i].tree << ',' << truth.labels[i].story << '\n';
}

// ---- plots ----

struct Plot {
  std::string id;
  Polygon2D shape;
};

// `plot_id,center_x,center_y,radius_m` (circles) or `plot_id,xmin,ymin,xmax,ymax`.
inline std::vector<Plot> read_plots(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  std::string first;
  while (std::getline(in, first) && (first.empty() || first[0] == '#')) {
  }
  const bool circles = io::split_csv(first).size() == 4;
  std::vector<Plot> plots;
  if (circles) {
    read_csv(path, {"plot_id", "center_x", "center_y", "radius_m"}, 4,
             [&](const std::vector<std::string>& f, std::size_t line) {
               const double r = field<double>(f[3], path, line, "radius_m");
               if (!(r > 0)) throw ParseError(path.string(), line, "radius must be positive");
               plots.push_back({f[0], circle_polygon({field<double>(f[1], path, line, "center_x"),
                                                      field<double>(f[2], path, line, "center_y")},
                                                     r)});
             });
  } else {
    read_csv(path, {"plot_id", "xmin", "ymin", "xmax", "ymax"}, 5,
             [&](const std::vector<std::string>& f, std::size_t line) {
               const double x0 = field<double>(f[1], path, line, "xmin"), y0 = field<double>(f[2], path, line, "ymin");
               const double x1 = field<double>(f[3], path, line, "xmax"), y1 = field<double>(f[4], path, line, "ymax");
               if (!(x1 > x0 && y1 > y0)) throw ParseError(path.string(), line, "plot needs positive area");
               plots.push_back({f[0], rectangle(BBox::of(x0, y0, x1, y1))});
             });
  }
  return plots;
}

// ---- metrics ----

struct MetricsRow {
  std::string plot_id;
  std::string cls;
  eval::Counts counts;
};

inline void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "plot_id,class,MT,OE,CE,recall,precision,f_score\n";
  for (const MetricsRow& r : rows) {
    const eval::Metrics m = eval::metrics(r.counts);
    out << r.plot_id << ',' << r.cls << ',' << r.counts.mt << ',' << r.counts.oe << ',' << r.counts.ce << ','
        << io::fixed(m.recall, 4) << ',' << io::fixed(m.precision, 4) << ',' << io::fixed(m.f_score, 4) << '\n';
  }
}

// ---- layers ----

// Layer rows, the "all" aggregate, then a "cloud" row carrying the point
// count and density of the whole input cloud.
inline void write_layers(std::ostream& out, const std::vector<strata::LayerRow>& rows, std::size_t cloud_points,
                         double cloud_density) {
  out << "layer,points,starting_height_m,thickness_m,density_pt_m2\n";
  for (const strata::LayerRow& r : rows)
    out << r.label << ',' << r.points << ',' << io::fixed(r.starting_height, 3) << ',' << io::fixed(r.thickness, 3)
        << ',' << io::fmt(r.density) << '\n';
  out << "cloud," << cloud_points << ",0,0," << io::fmt(cloud_density) << '\n';
}

struct LayerTable {
  std::vector<std::pair<int, double>> densities;  // (layer index, density)
  std::optional<double> cloud_density;
};

inline LayerTable read_layers(const std::filesystem::path& path) {
  LayerTable t;
  read_csv(path, {"layer", "points", "starting_height_m", "thickness_m", "density_pt_m2"}, 5,
           [&](const std::vector<std::string>& f, std::size_t line) {
             const double d = field<double>(f[4], path, line, "density_pt_m2");
             if (!(d >= 0)) throw ParseError(path.string(), line, "density must be non-negative");
             if (f[0] == "all") return;
             if (f[0] == "cloud") {
               t.cloud_density = d;
               return;
             }
             const int idx = field<int>(f[0], path, line, "layer");
             if (idx < 1) throw ParseError(path.string(), line, "layer index must be >= 1");
             t.densities.emplace_back(idx, d);
           });
  std::sort(t.densities.begin(), t.densities.end());
  return t;
}

// ---- occlusion ----

inline void write_occlusion_report(std::ostream& out, const std::vector<occlusion::OcclusionRow>& rows,
                                   double pcd_min_top) {
  out << "n,p_n_observed,p_n_fitted,pcd_min_at_" << io::fmt(pcd_min_top) << '\n';
  for (const occlusion::OcclusionRow& r : rows)
    out << r.n << ',' << io::fixed(r.observed, 6) << ',' << io::fixed(r.fitted, 6) << ','
        << (r.pcd_min ? io::fixed(*r.pcd_min, 4) : "inf") << '\n';
}

// ---- tile layout ----

struct TileEntry {
  dist::TileFootprint footprint;
  std::filesystem::path path;  // resolved against the layout file's directory
};

struct TileLayout {
  double tile_size = 0.0;
  std::vector<TileEntry> tiles;
};

inline TileLayout read_tile_layout(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  auto bad = [&](const std::string& what) { return InvalidInput(path.string() + ": " + what); };
  if (!j.is_object() || !j.contains("tile_size_m") || !j["tile_size_m"].is_number() || !j.contains("tiles") ||
      !j["tiles"].is_array())
    throw bad("expected {tile_size_m, tiles: [...]}");
  TileLayout layout;
  layout.tile_size = j["tile_size_m"].get<double>();
  const std::filesystem::path base = path.parent_path();
  for (const auto& t : j["tiles"]) {
    for (const char* k : {"id", "xmin", "ymin", "xmax", "ymax"})
      if (!t.contains(k) || !t[k].is_number()) throw bad(std::string("tile entry needs numeric '") + k + "'");
    if (!t.contains("path") || !t["path"].is_string()) throw bad("tile entry needs a string 'path'");
    if (!t["id"].is_number_unsigned()) throw bad("tile id must be a non-negative integer");
    TileEntry e;
    e.footprint.id = t["id"].get<std::size_t>();
    e.footprint.extent = BBox::of(t["xmin"].get<double>(), t["ymin"].get<double>(), t["xmax"].get<double>(),
                                  t["ymax"].get<double>());
    const std::filesystem::path p = t["path"].get<std::string>();
    e.path = p.is_absolute() ? p : base / p;
    layout.tiles.push_back(e);
  }
  return layout;
}

inline void write_tile_layout(std::ostream& out, const TileLayout& layout) {
  nlohmann::ordered_json j;
  j["tile_size_m"] = layout.tile_size;
  j["tiles"] = nlohmann::ordered_json::array();
  for (const TileEntry& e : layout.tiles) {
    nlohmann::ordered_json t;
    t["id"] = e.footprint.id;
    t["xmin"] = e.footprint.extent.xmin;
    t["ymin"] = e.footprint.extent.ymin;
    t["xmax"] = e.footprint.extent.xmax;
    t["ymax"] = e.footprint.extent.ymax;
    t["path"] = e.path.generic_string();
    j["tiles"].push_back(t);
  }
  out << j.dump(2) << '\n';
}

}  // namespace canopy::app
