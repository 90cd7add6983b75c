#pragma once

#include <span>
#include <vector>

#include "canopy/strata/stratify.hpp"
#include "canopy/treeseg/segment.hpp"

namespace canopy::strata {

struct LayeredSegmentation {
  std::vector<treeseg::Crown> crowns;  // ids 1..n over all layers, top layer first
  std::vector<PointId> noise;
  std::vector<PointId> low;
};

// Segments every layer on its own and tags crowns with their layer index.
inline LayeredSegmentation segment_layers(std::span<const CanopyLayer> layers, const treeseg::SegConfig& cfg) {
  LayeredSegmentation out;
  for (const CanopyLayer& layer : layers) {
    if (layer.points.empty()) continue;
    treeseg::SegmentOutcome seg = treeseg::segment_cloud(layer.points, cfg);
    for (treeseg::Crown& c : seg.crowns) {
      c.layer = layer.index;
      c.id = out.crowns.size() + 1;
      out.crowns.push_back(std::move(c));
    }
    out.noise.insert(out.noise.end(), seg.noise.begin(), seg.noise.end());
    out.low.insert(out.low.end(), seg.low.begin(), seg.low.end());
  }
  std::sort(out.noise.begin(), out.noise.end());
  std::sort(out.low.begin(), out.low.end());
  return out;
}

}  // namespace canopy::strata
