#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "canopy/forge/forest.hpp"

namespace canopy::forge {

namespace detail {

using nlohmann::json;

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw SpecError("forge spec: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw SpecError("forge spec: unknown key '" + k + "' in " + where);
  }
}

inline double number(const json& j, const std::string& key) {
  if (!j.is_number()) throw SpecError("forge spec: '" + key + "' must be a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& key) {
  if (!j.is_number_unsigned()) throw SpecError("forge spec: '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

inline Range range(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw SpecError("forge spec: '" + key + "' must be [lo, hi]");
  return {number(j[0], key), number(j[1], key)};
}

inline BBox box(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 4) throw SpecError("forge spec: '" + key + "' must be [xmin, ymin, xmax, ymax]");
  const double x0 = number(j[0], key), y0 = number(j[1], key), x1 = number(j[2], key), y1 = number(j[3], key);
  if (!(x1 > x0 && y1 > y0)) throw SpecError("forge spec: '" + key + "' must have positive area");
  return BBox::of(x0, y0, x1, y1);
}

inline CrownShape shape(const json& j) {
  if (!j.is_string()) throw SpecError("forge spec: 'shape' must be a string");
  return crown_shape_from(j.get<std::string>());
}

inline int story(const json& j) {
  if (!j.is_number_integer()) throw SpecError("forge spec: 'story' must be an integer");
  return j.get<int>();
}

inline StandSpec stand_from(const json& j) {
  only_keys(j, "stand", {"count", "density_per_ha", "placement", "min_spacing", "height", "crown_ratio",
                         "crown_radius", "shape", "story", "region"});
  StandSpec s;
  if (j.contains("count")) s.count = count(j["count"], "count");
  if (j.contains("density_per_ha")) s.density_per_ha = number(j["density_per_ha"], "density_per_ha");
  if (j.contains("placement")) {
    const std::string p = j["placement"].is_string() ? j["placement"].get<std::string>() : "";
    if (p == "poisson") s.placement = Placement::poisson;
    else if (p == "grid") s.placement = Placement::grid;
    else throw SpecError("forge spec: placement must be \"poisson\" or \"grid\"");
  }
  if (j.contains("min_spacing")) s.min_spacing = number(j["min_spacing"], "min_spacing");
  if (j.contains("height")) s.height = range(j["height"], "height");
  if (j.contains("crown_ratio")) s.crown_ratio = range(j["crown_ratio"], "crown_ratio");
  if (j.contains("crown_radius")) s.crown_radius = range(j["crown_radius"], "crown_radius");
  if (j.contains("shape")) s.shape = shape(j["shape"]);
  if (j.contains("story")) s.story = story(j["story"]);
  if (j.contains("region")) s.region = box(j["region"], "region");
  return s;
}

inline TreeSpec tree_from(const json& j) {
  only_keys(j, "tree", {"x", "y", "height", "crown_radius", "crown_base", "shape", "story"});
  TreeSpec t;
  for (const char* k : {"x", "y", "height", "crown_radius", "crown_base"})
    if (!j.contains(k)) throw SpecError(std::string("forge spec: tree needs '") + k + "'");
  t.x = number(j["x"], "x");
  t.y = number(j["y"], "y");
  t.height = number(j["height"], "height");
  t.crown_radius = number(j["crown_radius"], "crown_radius");
  t.crown_base = number(j["crown_base"], "crown_base");
  if (j.contains("shape")) t.shape = shape(j["shape"]);
  if (j.contains("story")) t.story = story(j["story"]);
  return t;
}

}  // namespace detail

// Strict: unknown keys and wrongly typed values are SpecErrors.
inline ForestSpec forest_spec_from_json(const nlohmann::json& j) {
  using detail::number;
  detail::only_keys(j, "spec", {"extent", "pulse_density", "noise_sigma", "seed", "ground", "dem_resolution", "theta",
                                "layer_fractions", "stands", "trees", "max_placement_attempts"});
  ForestSpec s;
  if (j.contains("extent")) s.extent = detail::box(j["extent"], "extent");
  if (j.contains("pulse_density")) s.pulse_density = number(j["pulse_density"], "pulse_density");
  if (j.contains("noise_sigma")) s.noise_sigma = number(j["noise_sigma"], "noise_sigma");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw SpecError("forge spec: 'seed' must be a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("ground")) {
    const auto& g = j["ground"];
    detail::only_keys(g, "ground", {"base_elevation", "relief_amplitude", "relief_wavelength"});
    if (g.contains("base_elevation")) s.ground.base_elevation = number(g["base_elevation"], "base_elevation");
    if (g.contains("relief_amplitude")) s.ground.relief_amplitude = number(g["relief_amplitude"], "relief_amplitude");
    if (g.contains("relief_wavelength"))
      s.ground.relief_wavelength = number(g["relief_wavelength"], "relief_wavelength");
    if (!(s.ground.relief_wavelength > 0)) throw SpecError("forge spec: relief_wavelength must be positive");
  }
  if (j.contains("dem_resolution")) s.dem_resolution = number(j["dem_resolution"], "dem_resolution");
  if (j.contains("theta") && j.contains("layer_fractions"))
    throw SpecError("forge spec: give either theta or layer_fractions, not both");
  if (j.contains("theta")) s.theta = number(j["theta"], "theta");
  if (j.contains("layer_fractions")) {
    if (!j["layer_fractions"].is_array()) throw SpecError("forge spec: 'layer_fractions' must be an array");
    for (const auto& v : j["layer_fractions"]) s.layer_fractions.push_back(number(v, "layer_fractions"));
  }
  if (j.contains("stands")) {
    if (!j["stands"].is_array()) throw SpecError("forge spec: 'stands' must be an array");
    for (const auto& st : j["stands"]) s.stands.push_back(detail::stand_from(st));
  }
  if (j.contains("trees")) {
    if (!j["trees"].is_array()) throw SpecError("forge spec: 'trees' must be an array");
    for (const auto& t : j["trees"]) s.trees.push_back(detail::tree_from(t));
  }
  if (j.contains("max_placement_attempts"))
    s.max_placement_attempts = detail::count(j["max_placement_attempts"], "max_placement_attempts");
  s.validate();
  return s;
}

inline ForestSpec read_forest_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError(path.string() + ": " + e.what());
  }
  return forest_spec_from_json(j);
}

}  // namespace canopy::forge
