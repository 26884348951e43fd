#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ictseg/errors.hpp"
#include "ictseg/net/network.hpp"
#include "ictseg/raster.hpp"

namespace ictseg {

struct PixelCoord {
  int y, x;
};

namespace detail {

inline Grid<std::uint8_t> class_mask(const Raster& labels, int class_id) {
  Grid<std::uint8_t> mask(labels.height(), labels.width(), 1);
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x)
      mask.at(y, x, 0) = labels.label_at(y, x) == class_id ? 1 : 0;
  return mask;
}

}  // namespace detail

// Foreground pixels with at least one 4-neighbour outside the mask; the grid
// edge counts as outside.
inline std::vector<PixelCoord> boundary_pixels(const Grid<std::uint8_t>& mask) {
  std::vector<PixelCoord> out;
  const int h = mask.height(), w = mask.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x, 0)) continue;
      const bool boundary = y == 0 || x == 0 || y == h - 1 || x == w - 1 ||
                            !mask.at(y - 1, x, 0) || !mask.at(y + 1, x, 0) ||
                            !mask.at(y, x - 1, 0) || !mask.at(y, x + 1, 0);
      if (boundary) out.push_back({y, x});
    }
  return out;
}

// 2|P and G| / (|P| + |G|); both masks empty -> 1, exactly one empty -> 0.
inline double dice(const Raster& pred, const Raster& gt, int class_id) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ShapeError("dice: shape mismatch");
  std::size_t p = 0, g = 0, both = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      const bool in_p = pred.label_at(y, x) == class_id;
      const bool in_g = gt.label_at(y, x) == class_id;
      p += in_p;
      g += in_g;
      both += in_p && in_g;
    }
  if (p == 0 && g == 0) return 1.0;
  if (p == 0 || g == 0) return 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

namespace detail {

inline void check_metric_pair(const Raster& pred, const Raster& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ShapeError("surface distance: shape mismatch");
  if (!(pred.spacing == gt.spacing))
    throw ShapeError("surface distance: spacing mismatch");
}

// Nearest-neighbour distance in mm from each point of `from` to the set `to`.
inline std::vector<double> directed_nn_distances(const std::vector<PixelCoord>& from,
                                                 const std::vector<PixelCoord>& to,
                                                 const Spacing& spacing) {
  std::vector<double> out;
  out.reserve(from.size());
  for (const PixelCoord& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const PixelCoord& b : to) {
      const double dy = (a.y - b.y) * spacing.y_mm;
      const double dx = (a.x - b.x) * spacing.x_mm;
      const double d2 = dy * dy + dx * dx;
      if (d2 < best) best = d2;
    }
    out.push_back(std::sqrt(best));
  }
  return out;
}

struct BoundaryPair {
  std::vector<PixelCoord> pred, gt;
  bool both_empty() const { return pred.empty() && gt.empty(); }
  bool one_empty() const { return pred.empty() != gt.empty(); }
};

inline BoundaryPair boundary_pair(const Raster& pred, const Raster& gt, int class_id) {
  check_metric_pair(pred, gt);
  return {boundary_pixels(class_mask(pred, class_id)),
          boundary_pixels(class_mask(gt, class_id))};
}

}  // namespace detail

// Exact symmetric Hausdorff distance in mm between class boundaries.
// Both masks empty -> 0; exactly one empty -> undefined (nullopt).
inline std::optional<double> hausdorff(const Raster& pred, const Raster& gt, int class_id,
                                       const Spacing& spacing) {
  const auto boundaries = detail::boundary_pair(pred, gt, class_id);
  if (boundaries.both_empty()) return 0.0;
  if (boundaries.one_empty()) return std::nullopt;
  const auto fwd = detail::directed_nn_distances(boundaries.pred, boundaries.gt, spacing);
  const auto bwd = detail::directed_nn_distances(boundaries.gt, boundaries.pred, spacing);
  return std::max(*std::max_element(fwd.begin(), fwd.end()),
                  *std::max_element(bwd.begin(), bwd.end()));
}

// Average symmetric surface distance in mm: mean of the two directed mean
// nearest-boundary distances. Empty-mask policy as hausdorff.
inline std::optional<double> asd(const Raster& pred, const Raster& gt, int class_id,
                                 const Spacing& spacing) {
  const auto boundaries = detail::boundary_pair(pred, gt, class_id);
  if (boundaries.both_empty()) return 0.0;
  if (boundaries.one_empty()) return std::nullopt;
  const auto fwd = detail::directed_nn_distances(boundaries.pred, boundaries.gt, spacing);
  const auto bwd = detail::directed_nn_distances(boundaries.gt, boundaries.pred, spacing);
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double d : v) s += d;
    return s / static_cast<double>(v.size());
  };
  return 0.5 * (mean(fwd) + mean(bwd));
}

// 95th-percentile Hausdorff over the pooled directed distances (linear
// interpolation percentile). Offered for comparability with works that
// report HD95; the plain hausdorff() above is the primary metric.
inline std::optional<double> hausdorff95(const Raster& pred, const Raster& gt, int class_id,
                                         const Spacing& spacing) {
  const auto boundaries = detail::boundary_pair(pred, gt, class_id);
  if (boundaries.both_empty()) return 0.0;
  if (boundaries.one_empty()) return std::nullopt;
  auto pooled = detail::directed_nn_distances(boundaries.pred, boundaries.gt, spacing);
  const auto bwd = detail::directed_nn_distances(boundaries.gt, boundaries.pred, spacing);
  pooled.insert(pooled.end(), bwd.begin(), bwd.end());
  std::sort(pooled.begin(), pooled.end());
  const double rank = 0.95 * static_cast<double>(pooled.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, pooled.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return pooled[lo] + frac * (pooled[hi] - pooled[lo]);
}

struct ClassMetrics {
  double dsc = 0.0;
  std::optional<double> asd;
  std::optional<double> hd;
  bool defined = false;  // distance metrics defined for at least one volume
};

// Per-class and class-averaged DSC/ASD/HD. Averages run over foreground
// classes; classes whose distances are undefined everywhere are excluded
// from the distance averages and counted in n_excluded.
struct MetricReport {
  std::map<int, ClassMetrics> per_class;
  double dsc_avg = 0.0;
  std::optional<double> asd_avg;
  std::optional<double> hd_avg;
  int n_excluded = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  long iteration = 0;
};

namespace detail {

struct MeanAccum {
  double sum = 0.0;
  long n = 0;
  void add(double v) { sum += v; ++n; }
  void add(const std::optional<double>& v) {
    if (v) add(*v);
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

}  // namespace detail

// Aggregates slice-level metrics: slices average into a per-volume value,
// volumes average into the per-class value, foreground classes average into
// the report headline. `predict` maps an image raster to a label raster.
template <typename PredictFn>
MetricReport evaluate_volumes_with(const std::vector<Volume>& volumes, int n_classes,
                                   PredictFn&& predict) {
  if (volumes.empty()) throw ValueError("evaluate: no volumes");
  MetricReport report;
  std::map<int, detail::MeanAccum> dsc_acc, asd_acc, hd_acc;

  for (const Volume& vol : volumes) {
    std::map<int, detail::MeanAccum> v_dsc, v_asd, v_hd;
    for (const Slice& s : vol.slices) {
      const Raster pred = predict(s.image);
      for (int cls = 1; cls < n_classes; ++cls) {
        v_dsc[cls].add(dice(pred, s.label, cls));
        v_asd[cls].add(asd(pred, s.label, cls, s.label.spacing));
        v_hd[cls].add(hausdorff(pred, s.label, cls, s.label.spacing));
      }
    }
    for (int cls = 1; cls < n_classes; ++cls) {
      dsc_acc[cls].add(v_dsc[cls].mean());
      asd_acc[cls].add(v_asd[cls].mean());
      hd_acc[cls].add(v_hd[cls].mean());
    }
  }

  detail::MeanAccum dsc_all, asd_all, hd_all;
  for (int cls = 1; cls < n_classes; ++cls) {
    ClassMetrics m;
    m.dsc = *dsc_acc[cls].mean();
    m.asd = asd_acc[cls].mean();
    m.hd = hd_acc[cls].mean();
    m.defined = m.asd.has_value() && m.hd.has_value();
    if (!m.defined) ++report.n_excluded;
    dsc_all.add(m.dsc);
    asd_all.add(m.asd);
    hd_all.add(m.hd);
    report.per_class[cls] = m;
  }
  report.dsc_avg = *dsc_all.mean();
  report.asd_avg = asd_all.mean();
  report.hd_avg = hd_all.mean();
  return report;
}

// Model-backed evaluation: argmax of the forward probabilities per slice.
template <typename T>
MetricReport evaluate_volumes(const Network<T>& net, const ParamSet<T>& params,
                              const std::vector<Volume>& volumes, int n_classes) {
  Workspace<T> ws = net.make_workspace();
  return evaluate_volumes_with(volumes, n_classes, [&](const Raster& image) {
    const Raster normalized = minmax_normalized(image);
    const Tensor<T>& probs = net.forward(params, to_tensor<T>({normalized}), ws);
    Raster prob_raster = make_raster(probs.height(), probs.width(), probs.channels(),
                                     RasterKind::probability, image.spacing);
    for (std::size_t i = 0; i < prob_raster.values.size(); ++i)
      prob_raster.values[i] = static_cast<float>(probs.data()[i]);
    return argmax_labels(prob_raster);
  });
}

}  // namespace ictseg
