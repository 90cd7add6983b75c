#pragma once

#include <optional>
#include <span>
#include <vector>

#include "canopy/occlusion/log_series.hpp"
#include "canopy/strata/stratify.hpp"

namespace canopy::occlusion {

// p_n = layer density / total density for n = 1..horizon; missing layers are 0.
inline std::vector<DensityObservation> layer_fractions(std::span<const strata::CanopyLayer> layers, double pcd,
                                                       int horizon = kFractionHorizon) {
  if (!(pcd > 0.0)) throw InvalidInput("layer_fractions: point density must be positive");
  std::vector<DensityObservation> obs;
  for (int n = 1; n <= horizon; ++n) obs.push_back({n, 0.0});
  for (const strata::CanopyLayer& l : layers)
    if (l.index >= 1 && l.index <= horizon) obs[static_cast<std::size_t>(l.index - 1)].p_n = l.density / pcd;
  return obs;
}

// Same, from bare layer densities (layer 1 first).
inline std::vector<DensityObservation> layer_fractions(std::span<const double> densities, double pcd,
                                                       int horizon = kFractionHorizon) {
  if (!(pcd > 0.0)) throw InvalidInput("layer_fractions: point density must be positive");
  std::vector<DensityObservation> obs;
  for (int n = 1; n <= horizon; ++n) {
    const auto i = static_cast<std::size_t>(n - 1);
    obs.push_back({n, i < densities.size() ? densities[i] / pcd : 0.0});
  }
  return obs;
}

struct OcclusionRow {
  int n = 1;
  double observed = 0.0;
  double fitted = 0.0;
  std::optional<double> pcd_min;  // empty when the depth diverges
};

// Rows for n = 1..horizon: mean observed p_n over all observations with that
// n, fitted pmf and pcd_min at `pcd_min_top`.
inline std::vector<OcclusionRow> occlusion_report(std::span<const DensityObservation> obs, const LogSeriesModel& model,
                                                  double pcd_min_top, int horizon = kFractionHorizon) {
  std::vector<OcclusionRow> rows;
  for (int n = 1; n <= horizon; ++n) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const DensityObservation& o : obs)
      if (o.n == n) {
        sum += o.p_n;
        ++count;
      }
    OcclusionRow r;
    r.n = n;
    r.observed = count ? sum / static_cast<double>(count) : 0.0;
    r.fitted = model.pmf(n);
    try {
      r.pcd_min = pcd_min(n, pcd_min_top, model);
    } catch (const DivergedDepth&) {
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace canopy::occlusion
