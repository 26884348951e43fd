// Test-only reference implementations, kept deliberately naive and
// independent of the library code paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ictseg/grid.hpp"
#include "ictseg/metrics.hpp"
#include "ictseg/net/params.hpp"
#include "ictseg/raster.hpp"
#include "ictseg/rng.hpp"

namespace oracle {

// Dice by direct set arithmetic over every pixel.
inline double dice_brute(const ictseg::Raster& a, const ictseg::Raster& b, int cls) {
  long na = 0, nb = 0, ni = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const bool in_a = a.label_at(y, x) == cls;
      const bool in_b = b.label_at(y, x) == cls;
      if (in_a) ++na;
      if (in_b) ++nb;
      if (in_a && in_b) ++ni;
    }
  if (na + nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  return 2.0 * ni / static_cast<double>(na + nb);
}

// Boundary via the definition, written against the raster rather than a mask.
inline std::vector<ictseg::PixelCoord> boundary_brute(const ictseg::Raster& labels, int cls) {
  std::vector<ictseg::PixelCoord> out;
  const auto is_fg = [&](int y, int x) {
    if (y < 0 || x < 0 || y >= labels.height() || x >= labels.width()) return false;
    return labels.label_at(y, x) == cls;
  };
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x)
      if (is_fg(y, x) &&
          (!is_fg(y - 1, x) || !is_fg(y + 1, x) || !is_fg(y, x - 1) || !is_fg(y, x + 1)))
        out.push_back({y, x});
  return out;
}

// Full all-pairs distance matrix, then reductions.
struct SurfaceDistances {
  bool defined = false;
  double hausdorff = 0.0;
  double asd = 0.0;
};

inline SurfaceDistances surface_brute(const ictseg::Raster& pred, const ictseg::Raster& gt,
                                      int cls, const ictseg::Spacing& spacing) {
  const auto bp = boundary_brute(pred, cls);
  const auto bg = boundary_brute(gt, cls);
  SurfaceDistances out;
  if (bp.empty() && bg.empty()) {
    out.defined = true;
    return out;
  }
  if (bp.empty() || bg.empty()) return out;

  std::vector<std::vector<double>> dist(bp.size(), std::vector<double>(bg.size()));
  for (std::size_t i = 0; i < bp.size(); ++i)
    for (std::size_t j = 0; j < bg.size(); ++j)
      dist[i][j] = std::hypot((bp[i].y - bg[j].y) * spacing.y_mm,
                              (bp[i].x - bg[j].x) * spacing.x_mm);

  double max_fwd = 0.0, sum_fwd = 0.0;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bg.size(); ++j) mn = std::min(mn, dist[i][j]);
    max_fwd = std::max(max_fwd, mn);
    sum_fwd += mn;
  }
  double max_bwd = 0.0, sum_bwd = 0.0;
  for (std::size_t j = 0; j < bg.size(); ++j) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bp.size(); ++i) mn = std::min(mn, dist[i][j]);
    max_bwd = std::max(max_bwd, mn);
    sum_bwd += mn;
  }
  out.defined = true;
  out.hausdorff = std::max(max_fwd, max_bwd);
  out.asd = 0.5 * (sum_fwd / bp.size() + sum_bwd / bg.size());
  return out;
}

// Central finite differences of an arbitrary scalar of the parameters.
struct FdCheckResult {
  double max_rel_error = 0.0;
  long checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

inline FdCheckResult fd_check(ictseg::ParamSet<double>& params,
                              const ictseg::ParamSet<double>& analytic,
                              const std::function<double()>& loss, long max_params,
                              ictseg::Rng& rng, double h = 1e-5) {
  FdCheckResult result;
  const std::size_t entries = params.entry_count();
  std::vector<std::pair<std::size_t, std::size_t>> sites;
  for (std::size_t e = 0; e < entries; ++e)
    for (std::size_t i = 0; i < params.entry(e).values.size(); ++i) sites.push_back({e, i});
  // sample without replacement
  for (std::size_t i = sites.size(); i > 1 && static_cast<long>(sites.size() - i) < max_params; --i)
    std::swap(sites[i - 1], sites[rng.uniform_index(i)]);
  const long n = std::min<long>(max_params, static_cast<long>(sites.size()));

  for (long k = 0; k < n; ++k) {
    const auto [e, i] = sites[sites.size() - 1 - k];
    double& p = params.entry(e).values[i];
    const double original = p;
    const double step = h * std::max(1.0, std::abs(original));
    p = original + step;
    const double up = loss();
    p = original - step;
    const double down = loss();
    p = original;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = relative_error(analytic.entry(e).values[i], numeric);
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }
  return result;
}

inline ictseg::Tensor<double> random_tensor(int n, int h, int w, int c, ictseg::Rng& rng,
                                            double lo = 0.0, double hi = 1.0) {
  ictseg::Tensor<double> t(n, h, w, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline void randomize_params(ictseg::ParamSet<double>& params, ictseg::Rng& rng, double scale) {
  for (std::size_t e = 0; e < params.entry_count(); ++e)
    for (double& v : params.entry(e).values) v = rng.uniform(-scale, scale);
}

}  // namespace oracle
