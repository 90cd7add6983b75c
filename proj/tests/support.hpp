#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "canopy/core/preprocess.hpp"
#include "canopy/forge/forest.hpp"
#include "canopy/treeseg/types.hpp"

namespace support {

using namespace canopy;

inline PointCloud above_ground(const forge::Forest& f) { return normalize_heights(f.cloud, f.dem).cloud; }

// Trees on a square lattice with `spacing` between lattice nodes; radius and
// jitter are bounded so neighboring crowns stay at least `gap` apart.
inline forge::ForestSpec separated_stand(std::size_t n, forge::CrownShape shape, std::uint64_t seed,
                                         double density = 10.0, double spacing = 12.0, double gap = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols;
  forge::ForestSpec spec;
  spec.extent = BBox::of(0, 0, spacing * static_cast<double>(cols), spacing * static_cast<double>(rows));
  spec.pulse_density = density;
  spec.seed = seed;
  const double max_r = spacing / 2.0 - gap / 2.0 - 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    forge::TreeSpec t;
    t.x = (static_cast<double>(i % cols) + 0.5) * spacing + (u(rng) - 0.5) * 1.0;
    t.y = (static_cast<double>(i / cols) + 0.5) * spacing + (u(rng) - 0.5) * 1.0;
    t.height = 12.0 + 16.0 * u(rng);
    t.crown_radius = 2.5 + (max_r - 2.5) * u(rng);
    t.crown_base = t.height * (0.3 + 0.3 * u(rng));
    t.shape = shape;
    spec.trees.push_back(t);
  }
  return spec;
}

// Truth tree behind the majority of a crown's points and the share of
// points it accounts for.
struct Purity {
  std::size_t tree = 0;
  double share = 0.0;
};

inline Purity crown_purity(const treeseg::Crown& c, const forge::GroundTruth& truth) {
  std::map<std::size_t, std::size_t> votes;
  for (const Point3D& p : c.members) ++votes[truth.labels.at(p.id).tree];
  Purity best;
  std::size_t top = 0;
  for (const auto& [tree, n] : votes)
    if (n > top) top = n, best.tree = tree;
  best.share = c.members.empty() ? 0.0 : static_cast<double>(top) / static_cast<double>(c.members.size());
  return best;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("canopy-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace support

namespace support {

struct Story {
  forge::Range height;
  forge::Range crown_ratio;
  double spacing = 10.0;  // grid spacing; crowns reach 0.75 of it so the story covers the ground
  forge::CrownShape shape = forge::CrownShape::ellipsoid;
  double fraction = 1.0;
};

// One grid stand per story, without jitter.
inline forge::ForestSpec storied_stand(const std::vector<Story>& stories, const BBox& extent, double density,
                                       std::uint64_t seed) {
  forge::ForestSpec spec;
  spec.extent = extent;
  spec.pulse_density = density;
  spec.seed = seed;
  int n = 1;
  for (const Story& s : stories) {
    forge::StandSpec st;
    const auto cols = static_cast<std::size_t>(std::round(extent.width() / s.spacing));
    const auto rows = static_cast<std::size_t>(std::round(extent.height() / s.spacing));
    st.count = cols * rows;
    st.placement = forge::Placement::grid;
    st.min_spacing = s.spacing;
    st.height = s.height;
    st.crown_ratio = s.crown_ratio;
    st.crown_radius = {0.72 * s.spacing, 0.76 * s.spacing};
    st.shape = s.shape;
    st.story = n++;
    spec.stands.push_back(st);
    spec.layer_fractions.push_back(s.fraction);
  }
  return spec;
}

}  // namespace support

namespace support {

// Best total weight of a partial one-to-one assignment, by exhaustive search.
// Non-finite or non-positive weights are forbidden.
inline double brute_force_best(std::size_t rows, std::size_t cols, const std::vector<double>& w) {
  std::vector<char> used(cols, 0);
  double best = 0.0;
  auto go = [&](auto&& self, std::size_t r, double acc) -> void {
    if (r == rows) {
      best = std::max(best, acc);
      return;
    }
    self(self, r + 1, acc);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = w[r * cols + c];
      if (used[c] || !std::isfinite(x) || x <= 0.0) continue;
      used[c] = 1;
      self(self, r + 1, acc + x);
      used[c] = 0;
    }
  };
  go(go, 0, 0.0);
  return best;
}

}  // namespace support
