#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "canopy/core/point_cloud.hpp"
#include "canopy/core/raster.hpp"
#include "canopy/error.hpp"

namespace canopy::io {

// Shortest decimal text that parses back to exactly `v`.
inline std::string fmt(double v) {
  if (v == 0.0) return "0";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// Fixed-point text, for human-facing report columns.
inline std::string fixed(double v, int digits) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  std::string s(buf.data(), res.ptr);
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) s.erase(0, s[0] == '-' ? 1 : 0);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      std::string_view f = line.substr(start, i - start);
      while (!f.empty() && std::isspace(static_cast<unsigned char>(f.front()))) f.remove_prefix(1);
      while (!f.empty() && std::isspace(static_cast<unsigned char>(f.back()))) f.remove_suffix(1);
      out.emplace_back(f);
      start = i + 1;
    }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline PointClass class_from_code(int code, const std::string& source, std::size_t line) {
  switch (code) {
    case 0: return PointClass::unclassified;
    case 2: return PointClass::ground;
    case 5: return PointClass::vegetation;
    default: throw ParseError(source, line, "unknown class code " + std::to_string(code));
  }
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

// Reads `x y z class [id]` lines. Lines starting with '#' are comments;
// `# extent xmin ymin xmax ymax` and `# frame above_ground|absolute` set the
// cloud extent and height frame. Without an id column, ids are the 0-based
// data line ordinals.
inline PointCloud read_point_cloud(std::istream& in, const std::string& source = "<stream>") {
  std::vector<Point3D> pts;
  BBox extent;
  HeightFrame frame = HeightFrame::absolute;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields[0].front() == '#') {
      if (fields.size() == 6 && fields[1] == "extent") {
        double v[4];
        for (int k = 0; k < 4; ++k)
          if (!parse_number(fields[2 + k], v[k])) throw ParseError(source, lineno, "bad extent value");
        extent = BBox::of(v[0], v[1], v[2], v[3]);
      } else if (fields.size() == 3 && fields[1] == "frame") {
        frame = fields[2] == "above_ground" ? HeightFrame::above_ground : HeightFrame::absolute;
      }
      continue;
    }
    if (fields.size() != 4 && fields.size() != 5)
      throw ParseError(source, lineno, "expected 4 or 5 fields, got " + std::to_string(fields.size()));
    Point3D p;
    int code = 0;
    if (!parse_number(fields[0], p.x) || !parse_number(fields[1], p.y) || !parse_number(fields[2], p.z))
      throw ParseError(source, lineno, "bad coordinate");
    if (!parse_number(fields[3], code)) throw ParseError(source, lineno, "bad class code");
    p.cls = class_from_code(code, source, lineno);
    p.id = pts.size();
    if (fields.size() == 5 && !parse_number(fields[4], p.id)) throw ParseError(source, lineno, "bad point id");
    if (!p.finite()) throw ParseError(source, lineno, "non-finite coordinate");
    pts.push_back(p);
  }
  PointCloud cloud = PointCloud::with_extent(std::move(pts), extent, frame);
  return cloud;
}

inline PointCloud read_point_cloud(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_point_cloud(in, path.string());
}

inline void write_point_cloud(std::ostream& out, const PointCloud& cloud, bool with_ids) {
  out << "# x y z class" << (with_ids ? " id" : "") << '\n';
  if (!cloud.extent.empty())
    out << "# extent " << fmt(cloud.extent.xmin) << ' ' << fmt(cloud.extent.ymin) << ' ' << fmt(cloud.extent.xmax)
        << ' ' << fmt(cloud.extent.ymax) << '\n';
  out << "# frame " << (cloud.frame == HeightFrame::above_ground ? "above_ground" : "absolute") << '\n';
  for (const Point3D& p : cloud.points) {
    out << fmt(p.x) << ' ' << fmt(p.y) << ' ' << fmt(p.z) << ' ' << static_cast<int>(p.cls);
    if (with_ids) out << ' ' << p.id;
    out << '\n';
  }
}

// Writes to a sibling temporary file and renames it into place.
template <typename Fn>
void write_file_atomic(const std::filesystem::path& path, Fn&& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw InvalidInput("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud, bool with_ids) {
  write_file_atomic(path, [&](std::ostream& out) { write_point_cloud(out, cloud, with_ids); });
}

// ESRI ASCII grid. Accepts xllcorner/xllcenter; rows are north first.
inline Dem read_esri_ascii(std::istream& in, const std::string& source = "<stream>") {
  std::size_t ncols = 0, nrows = 0;
  double xll = 0, yll = 0, cellsize = 0, nodata = Dem::kDefaultNodata;
  bool center = false, have_x = false, have_y = false, have_cell = false;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (!header_done && std::isalpha(static_cast<unsigned char>(fields[0].front()))) {
      if (fields.size() != 2) throw ParseError(source, lineno, "header lines need one value");
      std::string key(fields[0]);
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      double v = 0;
      if (!parse_number(fields[1], v)) throw ParseError(source, lineno, "bad header value for " + key);
      if (key == "ncols") ncols = static_cast<std::size_t>(v);
      else if (key == "nrows") nrows = static_cast<std::size_t>(v);
      else if (key == "xllcorner" || key == "xllcenter") { xll = v; have_x = true; center = key == "xllcenter"; }
      else if (key == "yllcorner" || key == "yllcenter") { yll = v; have_y = true; }
      else if (key == "cellsize") { cellsize = v; have_cell = true; }
      else if (key == "nodata_value") nodata = v;
      else throw ParseError(source, lineno, "unknown header key " + key);
      continue;
    }
    header_done = true;
    for (std::string_view f : fields) {
      double v = 0;
      if (!parse_number(f, v)) throw ParseError(source, lineno, "bad grid value");
      values.push_back(v);
    }
  }
  if (ncols == 0 || nrows == 0 || !have_x || !have_y || !have_cell)
    throw ParseError(source, lineno, "incomplete ESRI ASCII header");
  if (!(cellsize > 0)) throw ParseError(source, lineno, "cellsize must be positive");
  if (values.size() != ncols * nrows)
    throw ParseError(source, lineno,
                     "expected " + std::to_string(ncols * nrows) + " values, got " + std::to_string(values.size()));
  if (center) {
    xll -= cellsize / 2;
    yll -= cellsize / 2;
  }
  RasterGrid<double> g({xll, yll}, cellsize, ncols, nrows, nodata);
  for (std::size_t r = 0; r < nrows; ++r)
    for (std::size_t c = 0; c < ncols; ++c) g.at({c, nrows - 1 - r}) = values[r * ncols + c];
  Dem dem(std::move(g), nodata);
  bool any_void = false;
  for (std::size_t i = 0; i < dem.grid().cell_count(); ++i) any_void = any_void || dem.is_void(i);
  if (any_void) dem.fill_voids();
  return dem;
}

inline Dem read_esri_ascii(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_esri_ascii(in, path.string());
}

inline void write_esri_ascii(std::ostream& out, const Dem& dem) {
  const auto& g = dem.grid();
  out << "ncols " << g.ncols() << '\n'
      << "nrows " << g.nrows() << '\n'
      << "xllcorner " << fmt(g.origin().x) << '\n'
      << "yllcorner " << fmt(g.origin().y) << '\n'
      << "cellsize " << fmt(g.cell_width()) << '\n'
      << "NODATA_value " << fmt(dem.nodata()) << '\n';
  for (std::size_t r = g.nrows(); r-- > 0;) {
    for (std::size_t c = 0; c < g.ncols(); ++c) out << (c ? " " : "") << fmt(g.at({c, r}));
    out << '\n';
  }
}

inline void write_esri_ascii(const std::filesystem::path& path, const Dem& dem) {
  write_file_atomic(path, [&](std::ostream& out) { write_esri_ascii(out, dem); });
}

}  // namespace canopy::io
