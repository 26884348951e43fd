#pragma once

#include <vector>

#include "ictseg/errors.hpp"
#include "ictseg/grid.hpp"
#include "ictseg/raster.hpp"
#include "ictseg/rng.hpp"

namespace ictseg {

enum class AlphaMode { fixed, beta };
enum class AlphaResample { per_batch, per_sample };

// Selection policy for the interpolation coefficient. The fixed mode returns
// alpha_fixed; the beta mode draws from Beta(beta_a, beta_a).
struct MixPolicy {
  AlphaMode mode = AlphaMode::fixed;
  double alpha_fixed = 0.5;
  double beta_a = 1.0;
  AlphaResample resample = AlphaResample::per_batch;
};

inline void validate_policy(const MixPolicy& p) {
  if (p.mode == AlphaMode::fixed) {
    if (p.alpha_fixed < 0.0 || p.alpha_fixed > 1.0)
      throw ValueError("mix policy: alpha_fixed must lie in [0,1]");
  } else {
    if (!(p.beta_a > 0.0)) throw ValueError("mix policy: beta_a must be > 0");
  }
}

// Advances the rng only in beta mode, so fixed-alpha runs consume no draws.
inline double draw_alpha(const MixPolicy& policy, Rng& rng) {
  validate_policy(policy);
  if (policy.mode == AlphaMode::fixed) return policy.alpha_fixed;
  return rng.beta(policy.beta_a, policy.beta_a);
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ValueError("mix: alpha must lie in [0,1], got " + std::to_string(alpha));
}

// Elementwise alpha*a + (1-alpha)*b. Both coefficients are formed in double
// and narrowed together, so mix(a, b, alpha) and mix(b, a, 1-alpha) use the
// same pair of weights.
template <typename T>
Grid<T> mix(const Grid<T>& a, const Grid<T>& b, double alpha) {
  check_alpha(alpha);
  if (!a.same_shape(b))
    throw ShapeError("mix: shape mismatch " + a.shape() + " vs " + b.shape());
  Grid<T> out = a;
  const T w = static_cast<T>(alpha);
  const T cw = static_cast<T>(1.0 - alpha);
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = w * po[i] + cw * pb[i];
  return out;
}

template <typename T>
Tensor<T> mix(const Tensor<T>& a, const Tensor<T>& b, double alpha) {
  check_alpha(alpha);
  if (!a.same_shape(b)) throw ShapeError("mix: batch shape mismatch");
  Tensor<T> out = a;
  const T w = static_cast<T>(alpha);
  const T cw = static_cast<T>(1.0 - alpha);
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = w * po[i] + cw * pb[i];
  return out;
}

// Per-sample coefficients, one alpha per batch element.
template <typename T>
Tensor<T> mix(const Tensor<T>& a, const Tensor<T>& b, const std::vector<double>& alphas) {
  if (!a.same_shape(b)) throw ShapeError("mix: batch shape mismatch");
  if (static_cast<int>(alphas.size()) != a.batch())
    throw ShapeError("mix: need one alpha per batch element");
  Tensor<T> out = a;
  const std::size_t stride = a.image_size();
  for (int n = 0; n < a.batch(); ++n) {
    check_alpha(alphas[n]);
    const T w = static_cast<T>(alphas[n]);
    const T cw = static_cast<T>(1.0 - alphas[n]);
    const T* pb = b.image(n);
    T* po = out.image(n);
    for (std::size_t i = 0; i < stride; ++i) po[i] = w * po[i] + cw * pb[i];
  }
  return out;
}

// Raster-level mixing. Integer label maps are rejected: only teacher
// probability outputs are ever interpolated, never class ids.
inline Raster mix(const Raster& a, const Raster& b, double alpha) {
  if (a.kind == RasterKind::label || b.kind == RasterKind::label)
    throw ValueError("mix: integer label rasters cannot be interpolated");
  if (a.kind != b.kind) throw ValueError("mix: raster kinds differ");
  if (!(a.spacing == b.spacing)) throw ShapeError("mix: raster spacing differs");
  Raster out;
  out.values = mix(a.values, b.values, alpha);
  out.spacing = a.spacing;
  out.kind = a.kind;
  return out;
}

inline std::vector<Raster> mix(const std::vector<Raster>& a, const std::vector<Raster>& b,
                               double alpha) {
  if (a.size() != b.size()) throw ShapeError("mix: batch size mismatch");
  std::vector<Raster> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(mix(a[i], b[i], alpha));
  return out;
}

}  // namespace ictseg
