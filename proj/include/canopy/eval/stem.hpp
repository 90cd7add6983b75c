#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "canopy/error.hpp"

namespace canopy::eval {

enum class CrownClass { dominant, codominant, intermediate, overtopped, dead, unknown };

inline constexpr std::array<CrownClass, 6> kAllCrownClasses{CrownClass::dominant,   CrownClass::codominant,
                                                             CrownClass::intermediate, CrownClass::overtopped,
                                                             CrownClass::dead,       CrownClass::unknown};

inline std::string_view to_string(CrownClass c) {
  switch (c) {
    case CrownClass::dominant: return "dominant";
    case CrownClass::codominant: return "codominant";
    case CrownClass::intermediate: return "intermediate";
    case CrownClass::overtopped: return "overtopped";
    case CrownClass::dead: return "dead";
    case CrownClass::unknown: return "unknown";
  }
  return "unknown";
}

inline CrownClass crown_class_from(std::string_view s) {
  for (CrownClass c : kAllCrownClasses)
    if (to_string(c) == s) return c;
  if (s == "co-dominant") return CrownClass::codominant;
  if (s.empty()) return CrownClass::unknown;
  throw InvalidInput("unknown crown class '" + std::string(s) + "'");
}

inline bool is_overstory(CrownClass c) { return c == CrownClass::dominant || c == CrownClass::codominant; }
inline bool is_understory(CrownClass c) { return c == CrownClass::intermediate || c == CrownClass::overtopped; }

// A field-measured (or generated) stem location.
struct StemRecord {
  std::size_t id = 0;
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;
  CrownClass crown_class = CrownClass::unknown;
  std::optional<double> dbh_cm;
};

}  // namespace canopy::eval
