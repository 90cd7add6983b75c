#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "canopy/error.hpp"

namespace canopy::occlusion {

// Logarithmic series distribution over layer ordinals n = 1, 2, ...
class LogSeriesModel {
 public:
  explicit LogSeriesModel(double theta) : theta_(theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw InvalidInput("LogSeriesModel: theta must lie in (0, 1)");
  }

  double theta() const { return theta_; }

  double pmf(int n) const {
    if (n < 1) throw InvalidInput("LogSeriesModel: layer ordinal must be >= 1");
    // -log1p(-theta) keeps precision as theta -> 0.
    return std::pow(theta_, n) / (-std::log1p(-theta_) * n);
  }

  // p_1 + ... + p_n.
  double cdf(int n) const {
    double s = 0.0;
    for (int k = 1; k <= n; ++k) s += pmf(k);
    return s;
  }

 private:
  double theta_;
};

inline double log_series_pmf(const LogSeriesModel& model, int n) { return model.pmf(n); }

// Fraction of all returns recorded in layer n (layer 1 is the top).
struct DensityObservation {
  int n = 1;
  double p_n = 0.0;
};

// Layer densities are reported up to this depth; deeper layers are dropped and
// missing ones recorded as zero.
inline constexpr int kFractionHorizon = 5;

struct FitResult {
  LogSeriesModel model{0.5};
  double mse = 0.0;
  bool at_bound = false;  // optimum sits on the search interval edge
  std::size_t observations = 0;
};

inline double fit_mse(std::span<const DensityObservation> obs, double theta) {
  const LogSeriesModel m(theta);
  double s = 0.0;
  for (const DensityObservation& o : obs) {
    const double e = m.pmf(o.n) - o.p_n;
    s += e * e;
  }
  return s / static_cast<double>(obs.size());
}

// Least-squares fit of theta by golden-section search on [1e-6, 1 - 1e-6].
inline FitResult fit_log_series(std::span<const DensityObservation> obs) {
  if (obs.empty()) throw EmptyInput("fit_log_series: no observations");
  for (const DensityObservation& o : obs)
    if (o.n < 1) throw InvalidInput("fit_log_series: layer ordinal must be >= 1");
  constexpr double lo_bound = 1e-6, hi_bound = 1.0 - 1e-6, tol = 1e-9;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo_bound, b = hi_bound;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = fit_mse(obs, c), fd = fit_mse(obs, d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fit_mse(obs, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fit_mse(obs, d);
    }
  }
  double theta = (a + b) / 2.0;
  double mse = fit_mse(obs, theta);
  for (double edge : {lo_bound, hi_bound}) {
    const double e = fit_mse(obs, edge);
    if (e < mse) {
      theta = edge;
      mse = e;
    }
  }
  FitResult r;
  r.model = LogSeriesModel(theta);
  r.mse = mse;
  r.at_bound = theta - lo_bound < 1e-6 || hi_bound - theta < 1e-6;
  r.observations = obs.size();
  return r;
}

// Point density needed so that layer n keeps `pcd_min_top` once the n - 1
// layers above it are removed.
inline double pcd_min(int n, double pcd_min_top, const LogSeriesModel& model) {
  if (n < 1) throw InvalidInput("pcd_min: layer ordinal must be >= 1");
  if (!(pcd_min_top > 0.0)) throw InvalidInput("pcd_min: minimum top-layer density must be positive");
  const double above = model.cdf(n - 1);
  if (above >= 1.0 - 1e-12) throw DivergedDepth("pcd_min: layers above n hold all returns");
  return pcd_min_top / (1.0 - above);
}

}  // namespace canopy::occlusion
