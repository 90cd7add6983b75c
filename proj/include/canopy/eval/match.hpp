#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/error.hpp"
#include "canopy/eval/stem.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::eval {

// What matching needs to know about a segmented crown.
struct CrownSummary {
  std::size_t id = 0;
  double x = 0.0;  // apex
  double y = 0.0;
  double height = 0.0;
};

inline CrownSummary summarize(const treeseg::Crown& c) { return {c.id, c.apex.x, c.apex.y, c.height}; }

struct ScoreConfig {
  double max_height_error = 0.30;  // |dh| / stem height, exclusive
  double max_angle_deg = 15.0;     // exclusive
  double height_weight = 0.5;
  double angle_weight = 0.5;
  double buffer = 4.7;  // m around the plot

  void validate() const {
    if (!(max_height_error > 0.0 && max_angle_deg > 0.0 && max_angle_deg < 90.0))
      throw InvalidInput("ScoreConfig: thresholds must be positive (angle below 90)");
    if (!(height_weight >= 0.0 && angle_weight >= 0.0 && height_weight + angle_weight <= 1.0 + 1e-12))
      throw InvalidInput("ScoreConfig: weights must be non-negative and sum to at most 1");
    if (!(buffer >= 0.0)) throw InvalidInput("ScoreConfig: buffer must be non-negative");
  }
};

// Angle at the apex between the vertical and the line to the stem base.
inline double leaning_angle_deg(const CrownSummary& crown, const StemRecord& stem) {
  return degrees(std::atan2(std::hypot(crown.x - stem.x, crown.y - stem.y), crown.height));
}

inline double height_error(const CrownSummary& crown, const StemRecord& stem) {
  if (!(stem.height > 0.0)) throw InvalidInput("stem " + std::to_string(stem.id) + " has a non-positive height");
  return std::abs(crown.height - stem.height) / stem.height;
}

inline bool pair_eligible(const CrownSummary& crown, const StemRecord& stem, const ScoreConfig& cfg = {}) {
  const double dh = height_error(crown, stem);
  if (!(crown.height > 0.0)) return false;
  return dh < cfg.max_height_error && leaning_angle_deg(crown, stem) < cfg.max_angle_deg;
}

inline bool pair_eligible(const treeseg::Crown& crown, const StemRecord& stem, const ScoreConfig& cfg = {}) {
  return pair_eligible(summarize(crown), stem, cfg);
}

inline double pair_score(const CrownSummary& crown, const StemRecord& stem, const ScoreConfig& cfg = {}) {
  if (!pair_eligible(crown, stem, cfg))
    throw NotEligible("crown " + std::to_string(crown.id) + " and stem " + std::to_string(stem.id) +
                      " are not an eligible pair");
  return 1.0 - cfg.height_weight * (height_error(crown, stem) / cfg.max_height_error) -
         cfg.angle_weight * (leaning_angle_deg(crown, stem) / cfg.max_angle_deg);
}

inline double pair_score(const treeseg::Crown& crown, const StemRecord& stem, const ScoreConfig& cfg = {}) {
  return pair_score(summarize(crown), stem, cfg);
}

// Maximum-weight assignment on a rows x cols weight matrix (row-major).
// Entries that are not finite mark forbidden pairs. Returns, per row, the
// assigned column or nullopt. Hungarian method with potentials on the padded
// square cost matrix, O(n^3).
inline std::vector<std::optional<std::size_t>> max_weight_assignment(std::size_t rows, std::size_t cols,
                                                                     std::span<const double> weight) {
  if (weight.size() != rows * cols) throw InvalidInput("max_weight_assignment: matrix size mismatch");
  std::vector<std::optional<std::size_t>> result(rows);
  const std::size_t n = std::max(rows, cols);
  if (n == 0) return result;
  double top = 0.0;
  for (double w : weight)
    if (std::isfinite(w)) top = std::max(top, w);
  // Forbidden and padding cells cost as much as leaving the row unmatched.
  auto cost = [&](std::size_t i, std::size_t j) {
    if (i >= rows || j >= cols) return top;
    const double w = weight[i * cols + j];
    return std::isfinite(w) && w > 0.0 ? top - w : top;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1, c = j - 1;
    if (i < rows && c < cols) {
      const double w = weight[i * cols + c];
      if (std::isfinite(w) && w > 0.0) result[i] = c;
    }
  }
  return result;
}

struct MatchedPair {
  std::size_t crown_id = 0;
  std::size_t stem_id = 0;
  double score = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> matched;          // ordered by stem id
  std::vector<std::size_t> omission;         // stem ids (OE)
  std::vector<std::size_t> commission;       // crown ids (CE)
  std::vector<std::size_t> buffer_excluded;  // unmatched crowns with apex outside the plot

  std::size_t mt() const { return matched.size(); }
  std::size_t oe() const { return omission.size(); }
  std::size_t ce() const { return commission.size(); }

  double total_score() const {
    double s = 0.0;
    for (const MatchedPair& m : matched) s += m.score;
    return s;
  }
};

// Crowns with apex inside the plot grown by the buffer compete for stems.
// Unmatched crowns count as commission only when their apex is in the plot.
inline MatchResult match_trees(std::span<const CrownSummary> crowns, std::span<const StemRecord> stems,
                               const Polygon2D& plot, const ScoreConfig& cfg = {}) {
  cfg.validate();
  for (const StemRecord& s : stems)
    if (!(s.height > 0.0)) throw InvalidInput("stem " + std::to_string(s.id) + " has a non-positive height");
  auto in_plot = [&](const CrownSummary& c) { return plot.contains({c.x, c.y}); };
  auto in_reach = [&](const CrownSummary& c) {
    return in_plot(c) || plot.boundary_distance({c.x, c.y}) <= cfg.buffer;
  };

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < crowns.size(); ++i)
    if (in_reach(crowns[i])) candidates.push_back(i);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> w(candidates.size() * stems.size(), nan);
  for (std::size_t r = 0; r < candidates.size(); ++r)
    for (std::size_t c = 0; c < stems.size(); ++c) {
      const CrownSummary& crown = crowns[candidates[r]];
      if (pair_eligible(crown, stems[c], cfg)) w[r * stems.size() + c] = pair_score(crown, stems[c], cfg);
    }
  const auto assign = max_weight_assignment(candidates.size(), stems.size(), w);

  MatchResult m;
  std::vector<char> crown_used(crowns.size(), 0), stem_used(stems.size(), 0);
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    if (!assign[r]) continue;
    const std::size_t c = *assign[r];
    crown_used[candidates[r]] = 1;
    stem_used[c] = 1;
    m.matched.push_back({crowns[candidates[r]].id, stems[c].id, w[r * stems.size() + c]});
  }
  std::sort(m.matched.begin(), m.matched.end(),
            [](const MatchedPair& a, const MatchedPair& b) { return a.stem_id < b.stem_id; });
  for (std::size_t c = 0; c < stems.size(); ++c)
    if (!stem_used[c]) m.omission.push_back(stems[c].id);
  for (std::size_t i = 0; i < crowns.size(); ++i) {
    if (crown_used[i]) continue;
    (in_plot(crowns[i]) ? m.commission : m.buffer_excluded).push_back(crowns[i].id);
  }
  std::sort(m.omission.begin(), m.omission.end());
  std::sort(m.commission.begin(), m.commission.end());
  std::sort(m.buffer_excluded.begin(), m.buffer_excluded.end());
  return m;
}

inline MatchResult match_trees(std::span<const treeseg::Crown> crowns, std::span<const StemRecord> stems,
                               const Polygon2D& plot, const ScoreConfig& cfg = {}) {
  std::vector<CrownSummary> s;
  s.reserve(crowns.size());
  for (const treeseg::Crown& c : crowns) s.push_back(summarize(c));
  return match_trees(std::span<const CrownSummary>(s), stems, plot, cfg);
}

struct Counts {
  std::size_t mt = 0;
  std::size_t oe = 0;
  std::size_t ce = 0;

  Counts& operator+=(const Counts& o) {
    mt += o.mt;
    oe += o.oe;
    ce += o.ce;
    return *this;
  }
};

struct Metrics {
  double recall = 0.0;
  double precision = 0.0;
  double f_score = 0.0;
};

inline Metrics metrics(const Counts& c) {
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  Metrics m;
  m.recall = ratio(static_cast<double>(c.mt), static_cast<double>(c.mt + c.oe));
  m.precision = ratio(static_cast<double>(c.mt), static_cast<double>(c.mt + c.ce));
  m.f_score = ratio(2.0 * m.recall * m.precision, m.recall + m.precision);
  return m;
}

inline Metrics metrics(const MatchResult& r) { return metrics(Counts{r.mt(), r.oe(), r.ce()}); }

// Stem-class filters used in reports.
struct ClassFilter {
  std::string name;
  bool (*accepts)(CrownClass);
};

inline std::vector<ClassFilter> report_classes() {
  std::vector<ClassFilter> f{{"all", [](CrownClass) { return true; }},
                             {"overstory", [](CrownClass c) { return is_overstory(c); }},
                             {"understory", [](CrownClass c) { return is_understory(c); }},
                             {"dominant", [](CrownClass c) { return c == CrownClass::dominant; }},
                             {"codominant", [](CrownClass c) { return c == CrownClass::codominant; }},
                             {"intermediate", [](CrownClass c) { return c == CrownClass::intermediate; }},
                             {"overtopped", [](CrownClass c) { return c == CrownClass::overtopped; }},
                             {"dead", [](CrownClass c) { return c == CrownClass::dead; }}};
  return f;
}

// Counts restricted to one stem class. Matched and omitted trees carry their
// stem's class; a commission crown takes the class of the nearest stem.
inline Counts class_counts(const MatchResult& r, std::span<const CrownSummary> crowns,
                           std::span<const StemRecord> stems, const ClassFilter& filter) {
  std::map<std::size_t, const StemRecord*> stem_by_id;
  for (const StemRecord& s : stems) stem_by_id[s.id] = &s;
  std::map<std::size_t, const CrownSummary*> crown_by_id;
  for (const CrownSummary& c : crowns) crown_by_id[c.id] = &c;
  Counts out;
  for (const MatchedPair& m : r.matched)
    if (filter.accepts(stem_by_id.at(m.stem_id)->crown_class)) ++out.mt;
  for (std::size_t id : r.omission)
    if (filter.accepts(stem_by_id.at(id)->crown_class)) ++out.oe;
  for (std::size_t id : r.commission) {
    const CrownSummary& c = *crown_by_id.at(id);
    const StemRecord* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const StemRecord& s : stems) {
      const double d = std::hypot(s.x - c.x, s.y - c.y);
      if (d < best) {
        best = d;
        nearest = &s;
      }
    }
    if (filter.accepts(nearest ? nearest->crown_class : CrownClass::unknown)) ++out.ce;
  }
  return out;
}

}  // namespace canopy::eval
