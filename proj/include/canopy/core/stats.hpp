#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "canopy/error.hpp"

namespace canopy::stats {

// Sample quantile with linear interpolation between order statistics
// (q in [0, 1]; q = 0.5 is the usual median).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw EmptyInput("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return v[lo] + t * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace canopy::stats
