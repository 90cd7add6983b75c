#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "canopy/core/io.hpp"
#include "canopy/error.hpp"
#include "canopy/eval/match.hpp"
#include "canopy/strata/stratify.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::app {

// Every tunable a command may read. Keys match the field names.
struct Settings {
  treeseg::SegConfig seg;
  strata::StrataConfig strata;
  eval::ScoreConfig score;
  double timeout_factor = 10.0;
  double min_timeout_ms = 30000.0;

  void validate() const {
    seg.validate();
    strata.validate();
    score.validate();
    if (!(timeout_factor > 0.0)) throw InvalidInput("timeout_factor must be positive");
    if (!(min_timeout_ms > 0.0)) throw InvalidInput("min_timeout_ms must be positive");
  }
};

struct SettingKey {
  std::string name;
  std::function<std::string(const Settings&)> get;
  std::function<bool(Settings&, const std::string&)> set;  // false on a malformed value
};

namespace detail {

template <typename T, typename Member>
SettingKey key(std::string name, Member member) {
  return {std::move(name),
          [member](const Settings& s) {
            Settings copy = s;
            const T v = member(copy);
            if constexpr (std::is_floating_point_v<T>) return io::fmt(v);
            else return std::to_string(v);
          },
          [member](Settings& s, const std::string& text) {
            T v{};
            if (!io::parse_number(text, v)) return false;
            member(s) = v;
            return true;
          }};
}

}  // namespace detail

inline const std::vector<SettingKey>& setting_keys() {
  using detail::key;
#define CANOPY_KEY(T, path, name) key<T>(name, [](Settings& s) -> T& { return s.path; })
  static const std::vector<SettingKey> keys{
      CANOPY_KEY(double, seg.max_profile_distance, "max_profile_distance"),
      CANOPY_KEY(int, seg.initial_profiles, "initial_profiles"),
      CANOPY_KEY(double, seg.mdcw, "mdcw"),
      CANOPY_KEY(double, seg.min_tree_height, "min_tree_height"),
      CANOPY_KEY(double, seg.epsilon_deg, "epsilon_deg"),
      CANOPY_KEY(double, seg.cl_cone, "cl_cone"),
      CANOPY_KEY(double, seg.cl_sphere, "cl_sphere"),
      CANOPY_KEY(double, seg.o_cone, "o_cone"),
      CANOPY_KEY(double, seg.o_sphere, "o_sphere"),
      CANOPY_KEY(double, seg.gap_iqr_factor, "gap_iqr_factor"),
      CANOPY_KEY(double, seg.profile_width_factor, "profile_width_factor"),
      CANOPY_KEY(double, seg.smoothing_sigma_factor, "smoothing_sigma_factor"),
      CANOPY_KEY(double, seg.claim_tolerance_factor, "claim_tolerance_factor"),
      CANOPY_KEY(int, seg.max_profiles, "max_profiles"),
      CANOPY_KEY(double, strata.locale_radius_factor, "locale_radius_factor"),
      CANOPY_KEY(double, strata.locale_radius_floor, "locale_radius_floor"),
      CANOPY_KEY(double, strata.histogram_bin, "histogram_bin"),
      CANOPY_KEY(double, strata.kernel_sigma, "kernel_sigma"),
      CANOPY_KEY(double, strata.min_layer_top, "min_layer_top"),
      CANOPY_KEY(std::size_t, strata.min_remaining_points, "min_remaining_points"),
      CANOPY_KEY(double, score.max_height_error, "max_height_error"),
      CANOPY_KEY(double, score.max_angle_deg, "max_angle_deg"),
      CANOPY_KEY(double, score.height_weight, "height_weight"),
      CANOPY_KEY(double, score.angle_weight, "angle_weight"),
      CANOPY_KEY(double, score.buffer, "buffer"),
      CANOPY_KEY(double, timeout_factor, "timeout_factor"),
      CANOPY_KEY(double, min_timeout_ms, "min_timeout_ms"),
  };
#undef CANOPY_KEY
  return keys;
}

inline void apply_setting(Settings& s, const std::string& name, const std::string& value,
                          const std::string& where = "config") {
  for (const SettingKey& k : setting_keys())
    if (k.name == name) {
      if (!k.set(s, value)) throw InvalidInput(where + ": bad value '" + value + "' for " + name);
      return;
    }
  throw InvalidInput(where + ": unknown key '" + name + "'");
}

// Flat `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto fields = io::split_ws(line);
    if (fields.empty()) continue;
    std::string joined;
    for (std::string_view f : fields) joined += f;
    const auto eq = joined.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == joined.size())
      throw ParseError(path.string(), lineno, "expected key = value");
    out[joined.substr(0, eq)] = joined.substr(eq + 1);
  }
  return out;
}

inline Settings settings_from(const std::map<std::string, std::string>& values, const std::string& where) {
  Settings s;
  for (const auto& [k, v] : values) apply_setting(s, k, v, where);
  return s;
}

// Every key with its current value; enough to rebuild the settings exactly.
inline std::map<std::string, std::string> snapshot(const Settings& s) {
  std::map<std::string, std::string> out;
  for (const SettingKey& k : setting_keys()) out[k.name] = k.get(s);
  return out;
}

}  // namespace canopy::app
