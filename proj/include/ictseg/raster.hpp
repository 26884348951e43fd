#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ictseg/errors.hpp"
#include "ictseg/grid.hpp"

namespace ictseg {

enum class RasterKind { image, label, probability };

inline const char* to_string(RasterKind kind) {
  switch (kind) {
    case RasterKind::image: return "image";
    case RasterKind::label: return "label";
    case RasterKind::probability: return "probability";
  }
  return "?";
}

// Physical pixel size in millimetres, (row, column) order.
struct Spacing {
  double y_mm = 1.0;
  double x_mm = 1.0;

  bool operator==(const Spacing&) const = default;
};

// The universal carrier: image intensities, integer class ids (C=1) or
// per-pixel class probability vectors (C=K), plus physical spacing.
struct Raster {
  Grid<float> values;
  Spacing spacing;
  RasterKind kind = RasterKind::image;

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  int channels() const { return values.channels(); }

  int label_at(int y, int x) const { return static_cast<int>(values.at(y, x, 0)); }
};

inline Raster make_raster(int h, int w, int c, RasterKind kind, Spacing spacing = {}) {
  return Raster{Grid<float>(h, w, c), spacing, kind};
}

// Enforces the per-kind invariants. n_classes < 0 skips class-range checks.
inline void validate_raster(const Raster& r, int n_classes = -1) {
  if (r.values.empty()) throw ShapeError("raster: empty value grid");
  if (!(r.spacing.y_mm > 0.0) || !(r.spacing.x_mm > 0.0))
    throw ValueError("raster: spacing components must be > 0");
  if (r.kind == RasterKind::label) {
    if (r.channels() != 1) throw ShapeError("label raster must have C=1");
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      const float v = r.values[i];
      if (v != std::floor(v) || v < 0.0f)
        throw ValueError("label raster holds a non-integer or negative value");
      if (n_classes >= 0 && v >= static_cast<float>(n_classes))
        throw ValueError("label value " + std::to_string(static_cast<int>(v)) +
                         " out of range for K=" + std::to_string(n_classes));
    }
  } else if (r.kind == RasterKind::probability) {
    const int hw = r.height() * r.width();
    const int k = r.channels();
    for (int p = 0; p < hw; ++p) {
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        const float v = r.values[static_cast<std::size_t>(p) * k + c];
        if (v < 0.0f) throw ValueError("probability raster holds a negative value");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        throw ValueError("probability raster pixel does not sum to 1 (sum=" +
                         std::to_string(sum) + ")");
    }
  }
}

// Per-slice min-max normalization to [0,1]; constant slices map to 0.
inline Raster minmax_normalized(const Raster& image) {
  Raster out = image;
  if (image.values.empty()) return out;
  const auto [lo_it, hi_it] =
      std::minmax_element(image.values.data(), image.values.data() + image.values.size());
  const float lo = *lo_it, hi = *hi_it;
  const float range = hi - lo;
  if (range <= 0.0f) {
    out.values.fill(0.0f);
    return out;
  }
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (out.values[i] - lo) / range;
  return out;
}

// One 2-D training sample: an image and its exact label map.
struct Slice {
  Raster image;
  Raster label;
};

// Ordered stack of homogeneous slices sharing an id; the unit the
// labelled/unlabelled split operates on.
struct Volume {
  std::string id;
  std::vector<Slice> slices;
};

inline void validate_volume(const Volume& v, int n_classes = -1) {
  if (v.slices.empty()) throw ShapeError("volume '" + v.id + "': no slices");
  const Raster& first = v.slices.front().image;
  for (const Slice& s : v.slices) {
    validate_raster(s.image, n_classes);
    validate_raster(s.label, n_classes);
    if (s.image.height() != s.label.height() || s.image.width() != s.label.width())
      throw ShapeError("volume '" + v.id + "': image/label shape mismatch");
    if (s.image.height() != first.height() || s.image.width() != first.width() ||
        !(s.image.spacing == first.spacing))
      throw ShapeError("volume '" + v.id + "': inhomogeneous slices");
    if (s.image.kind != RasterKind::image || s.label.kind != RasterKind::label)
      throw ValueError("volume '" + v.id + "': slice kinds must be (image, label)");
  }
}

}  // namespace ictseg
