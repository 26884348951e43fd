#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ictseg/errors.hpp"
#include "ictseg/raster.hpp"
#include "ictseg/rng.hpp"

namespace ictseg {

namespace detail {

struct Ellipse {
  double cy, cx;      // centre, pixel units
  double ry, rx;      // semi-axes
  double phi;         // rotation
};

inline bool inside(const Ellipse& e, int y, int x) {
  const double dy = y - e.cy;
  const double dx = x - e.cx;
  const double c = std::cos(e.phi), s = std::sin(e.phi);
  const double u = (dy * c + dx * s) / e.ry;
  const double v = (-dy * s + dx * c) / e.rx;
  return u * u + v * v <= 1.0;
}

// Intensity band per class; background is class 0.
inline float class_band(int cls, int n_classes) {
  if (cls == 0) return 0.2f;
  return 0.2f + 0.6f * static_cast<float>(cls) / static_cast<float>(n_classes - 1);
}

}  // namespace detail

// Deterministic desk-scale dataset: each slice holds one filled ellipse per
// foreground class, rendered at that class's intensity band over a darker
// background, plus optional Gaussian pixel noise clamped to [0,1]. The label
// raster is exact (noise-free). Identical arguments give bitwise-identical
// output.
inline std::vector<Volume> generate_synthetic_dataset(int n_volumes, int slices_per_volume,
                                                      int height, int width, int n_classes,
                                                      double noise_sigma, std::uint64_t seed,
                                                      Spacing spacing = {}) {
  if (n_volumes < 1 || slices_per_volume < 1)
    throw ValueError("generate: need at least one volume and one slice");
  if (height < 16 || width < 16)
    throw ValueError("generate: invalid dimensions, minimum slice size is 16x16");
  if (n_classes < 2 || n_classes > 255)
    throw ValueError("generate: n_classes must lie in [2, 255]");
  if (noise_sigma < 0.0) throw ValueError("generate: noise_sigma must be >= 0");

  Rng rng(derived_seed(seed, 0xDA7A));
  std::vector<Volume> volumes;
  volumes.reserve(n_volumes);

  const int id_digits = std::max<int>(3, std::to_string(n_volumes - 1).size());
  for (int vi = 0; vi < n_volumes; ++vi) {
    std::string id = std::to_string(vi);
    id.insert(0, id_digits - id.size(), '0');
    Volume vol{"vol_" + id, {}};
    vol.slices.reserve(slices_per_volume);

    for (int si = 0; si < slices_per_volume; ++si) {
      Raster label = make_raster(height, width, 1, RasterKind::label, spacing);
      Raster image = make_raster(height, width, 1, RasterKind::image, spacing);

      for (int cls = 1; cls < n_classes; ++cls) {
        detail::Ellipse e{};
        // Try to place without touching earlier classes; accept the last
        // attempt if the slice is too crowded.
        std::vector<std::size_t> pixels;
        const double min_dim = std::min(height, width);
        for (int attempt = 0; attempt < 100; ++attempt) {
          e.ry = rng.uniform(min_dim / 8.0, min_dim / 4.0);
          e.rx = rng.uniform(min_dim / 8.0, min_dim / 4.0);
          e.phi = rng.uniform(0.0, M_PI);
          const double margin_y = std::max(e.ry, e.rx) + 1.0;
          const double margin_x = margin_y;
          e.cy = rng.uniform(margin_y, height - 1 - margin_y);
          e.cx = rng.uniform(margin_x, width - 1 - margin_x);
          pixels.clear();
          bool clean = true;
          const int y0 = static_cast<int>(std::floor(e.cy - margin_y));
          const int y1 = static_cast<int>(std::ceil(e.cy + margin_y));
          const int x0 = static_cast<int>(std::floor(e.cx - margin_x));
          const int x1 = static_cast<int>(std::ceil(e.cx + margin_x));
          for (int y = std::max(0, y0); y <= std::min(height - 1, y1); ++y)
            for (int x = std::max(0, x0); x <= std::min(width - 1, x1); ++x)
              if (detail::inside(e, y, x)) {
                pixels.push_back(label.values.index(y, x, 0));
                if (label.values[pixels.back()] != 0.0f) clean = false;
              }
          if (clean) break;
        }
        for (std::size_t idx : pixels) label.values[idx] = static_cast<float>(cls);
      }

      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          image.values.at(y, x, 0) = detail::class_band(label.label_at(y, x), n_classes);

      if (noise_sigma > 0.0) {
        for (std::size_t i = 0; i < image.values.size(); ++i) {
          const double v = image.values[i] + rng.normal(0.0, noise_sigma);
          image.values[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }

      vol.slices.push_back(Slice{std::move(image), std::move(label)});
    }
    volumes.push_back(std::move(vol));
  }
  return volumes;
}

// Volume-level labelled/unlabelled/validation/test partition. The four id
// lists are pairwise disjoint; labelled count = max(1, round(fraction * train)).
struct DatasetSplit {
  std::vector<std::string> labelled;
  std::vector<std::string> unlabelled;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;
};

inline DatasetSplit make_split(const std::vector<Volume>& volumes, double label_fraction,
                               int n_validation, int n_test, std::uint64_t seed) {
  if (!(label_fraction > 0.0) || label_fraction > 1.0)
    throw ValueError("make_split: label_fraction must lie in (0, 1]");
  if (n_validation < 0 || n_test < 0)
    throw ValueError("make_split: partition sizes must be >= 0");
  const long total = static_cast<long>(volumes.size());
  const long train = total - n_validation - n_test;
  if (train < 1)
    throw ValueError("make_split: need at least " +
                     std::to_string(n_validation + n_test + 1) + " volumes (" +
                     std::to_string(n_validation) + " validation + " + std::to_string(n_test) +
                     " test + 1 train), got " + std::to_string(total));

  std::vector<std::string> ids;
  ids.reserve(volumes.size());
  for (const Volume& v : volumes) ids.push_back(v.id);

  // Fisher-Yates with the library rng so the shuffle is platform-stable.
  Rng rng(derived_seed(seed, 0x5711));
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_index(i)]);

  const long n_labelled =
      std::max<long>(1, std::lround(label_fraction * static_cast<double>(train)));

  DatasetSplit split;
  split.seed = seed;
  split.label_fraction = label_fraction;
  auto it = ids.begin();
  split.validation.assign(it, it + n_validation);
  it += n_validation;
  split.test.assign(it, it + n_test);
  it += n_test;
  split.labelled.assign(it, it + n_labelled);
  it += n_labelled;
  split.unlabelled.assign(it, ids.end());
  return split;
}

enum class BatchMode { labelled, unlabelled };

// A labelled mini-batch (images, ground-truth labels) or an unlabelled pair
// of independently drawn image batches (u_i, u_j).
struct BatchPair {
  BatchMode mode = BatchMode::labelled;
  std::vector<Raster> first;
  std::vector<Raster> second;
};

inline std::vector<const Volume*> volumes_by_ids(const std::vector<Volume>& volumes,
                                                 const std::vector<std::string>& ids) {
  std::vector<const Volume*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = std::find_if(volumes.begin(), volumes.end(),
                           [&](const Volume& v) { return v.id == id; });
    if (it == volumes.end()) throw ValueError("split references unknown volume '" + id + "'");
    out.push_back(&*it);
  }
  return out;
}

inline std::vector<Volume> copy_volumes_by_ids(const std::vector<Volume>& volumes,
                                               const std::vector<std::string>& ids) {
  std::vector<Volume> out;
  for (const Volume* v : volumes_by_ids(volumes, ids)) out.push_back(*v);
  return out;
}

// Uniform iid slice sampling over the split's pools. Labelled mode returns
// (normalized images, exact labels); unlabelled mode returns two
// independently drawn normalized image batches. The unlabelled pool also
// contains the labelled volumes' images (their annotations stay unused).
class BatchSampler {
 public:
  BatchSampler(const std::vector<Volume>& volumes, const DatasetSplit& split) {
    for (const Volume* v : volumes_by_ids(volumes, split.labelled))
      for (const Slice& s : v->slices) {
        labelled_.push_back(&s);
        unlabelled_.push_back(&s);
      }
    for (const Volume* v : volumes_by_ids(volumes, split.unlabelled))
      for (const Slice& s : v->slices) unlabelled_.push_back(&s);
  }

  std::size_t labelled_pool_size() const { return labelled_.size(); }
  std::size_t unlabelled_pool_size() const { return unlabelled_.size(); }

  BatchPair sample(BatchMode mode, int batch_size, Rng& rng) const {
    if (batch_size < 1) throw ValueError("sample_batch: batch_size must be >= 1");
    BatchPair batch;
    batch.mode = mode;
    if (mode == BatchMode::labelled) {
      if (labelled_.empty()) throw ValueError("sample_batch: labelled pool is empty");
      for (int i = 0; i < batch_size; ++i) {
        const Slice& s = *labelled_[rng.uniform_index(labelled_.size())];
        batch.first.push_back(minmax_normalized(s.image));
        batch.second.push_back(s.label);
      }
    } else {
      if (unlabelled_.empty()) throw ValueError("sample_batch: unlabelled pool is empty");
      for (int i = 0; i < batch_size; ++i)
        batch.first.push_back(
            minmax_normalized(unlabelled_[rng.uniform_index(unlabelled_.size())]->image));
      for (int i = 0; i < batch_size; ++i)
        batch.second.push_back(
            minmax_normalized(unlabelled_[rng.uniform_index(unlabelled_.size())]->image));
    }
    return batch;
  }

 private:
  std::vector<const Slice*> labelled_;
  std::vector<const Slice*> unlabelled_;
};

}  // namespace ictseg
