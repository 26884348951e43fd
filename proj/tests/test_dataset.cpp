#include <gtest/gtest.h>

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <set>

#include "ictseg/dataset.hpp"
#include "ictseg/dataset_io.hpp"

using namespace ictseg;
namespace fs = std::filesystem;

namespace {

int count_components(const Raster& labels, int cls) {
  const int h = labels.height(), w = labels.width();
  std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
  int components = 0;
  for (int sy = 0; sy < h; ++sy)
    for (int sx = 0; sx < w; ++sx) {
      if (labels.label_at(sy, sx) != cls || seen[sy * w + sx]) continue;
      ++components;
      std::queue<std::pair<int, int>> frontier;
      frontier.push({sy, sx});
      seen[sy * w + sx] = 1;
      while (!frontier.empty()) {
        const auto [y, x] = frontier.front();
        frontier.pop();
        const std::array<std::pair<int, int>, 4> next{{{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}}};
        for (const auto& [ny, nx] : next) {
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          if (seen[ny * w + nx] || labels.label_at(ny, nx) != cls) continue;
          seen[ny * w + nx] = 1;
          frontier.push({ny, nx});
        }
      }
    }
  return components;
}

bool volumes_equal(const std::vector<Volume>& a, const std::vector<Volume>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].slices.size() != b[i].slices.size()) return false;
    for (std::size_t s = 0; s < a[i].slices.size(); ++s) {
      if (!(a[i].slices[s].image.values == b[i].slices[s].image.values)) return false;
      if (!(a[i].slices[s].label.values == b[i].slices[s].label.values)) return false;
      if (!(a[i].slices[s].image.spacing == b[i].slices[s].image.spacing)) return false;
    }
  }
  return true;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ictseg_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Generator, SingleSliceHasOneForegroundComponent) {
  const auto volumes = generate_synthetic_dataset(1, 1, 32, 32, 2, 0.0, 7);
  ASSERT_EQ(volumes.size(), 1u);
  ASSERT_EQ(volumes[0].slices.size(), 1u);
  const Raster& label = volumes[0].slices[0].label;
  long area = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) area += label.label_at(y, x) == 1;
  EXPECT_GE(area, 9);
  EXPECT_EQ(count_components(label, 1), 1);
}

TEST(Generator, ZeroNoiseImageIsFunctionOfLabel) {
  for (std::uint64_t seed : {1ull, 9ull, 123ull}) {
    const auto volumes = generate_synthetic_dataset(2, 2, 32, 32, 3, 0.0, seed);
    // every pixel with the same label value carries the same intensity
    std::map<int, float> band;
    for (const Volume& v : volumes)
      for (const Slice& s : v.slices)
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) {
            const int cls = s.label.label_at(y, x);
            const float val = s.image.values.at(y, x, 0);
            auto it = band.find(cls);
            if (it == band.end()) band[cls] = val;
            else EXPECT_EQ(it->second, val) << "class " << cls;
          }
    EXPECT_EQ(band.size(), 3u);  // three distinct bands for K=3
  }
}

TEST(Generator, DeterministicForFixedSeed) {
  const auto a = generate_synthetic_dataset(3, 2, 32, 32, 2, 0.25, 99);
  const auto b = generate_synthetic_dataset(3, 2, 32, 32, 2, 0.25, 99);
  EXPECT_TRUE(volumes_equal(a, b));
  const auto c = generate_synthetic_dataset(3, 2, 32, 32, 2, 0.25, 100);
  EXPECT_FALSE(volumes_equal(a, c));
}

// Counting pass over all generated masks: mean foreground fraction sits in a
// broad sane band.
TEST(Generator, ForegroundAreaFraction) {
  const auto volumes = generate_synthetic_dataset(200, 1, 64, 64, 2, 0.3, 1);
  double total_fraction = 0.0;
  for (const Volume& v : volumes) {
    long fg = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) fg += v.slices[0].label.label_at(y, x) == 1;
    total_fraction += static_cast<double>(fg) / (64.0 * 64.0);
  }
  const double mean_fraction = total_fraction / 200.0;
  EXPECT_GE(mean_fraction, 0.05);
  EXPECT_LE(mean_fraction, 0.45);
}

TEST(Generator, LabelValuesBelowClassCount) {
  const auto volumes = generate_synthetic_dataset(4, 1, 48, 48, 4, 0.4, 3);
  for (const Volume& v : volumes) {
    validate_volume(v, 4);
    for (const Slice& s : v.slices)
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
          EXPECT_GE(s.label.label_at(y, x), 0);
          EXPECT_LT(s.label.label_at(y, x), 4);
          EXPECT_GE(s.image.values.at(y, x, 0), 0.0f);
          EXPECT_LE(s.image.values.at(y, x, 0), 1.0f);
        }
  }
}

TEST(Generator, RejectsInvalidArguments) {
  EXPECT_THROW(generate_synthetic_dataset(1, 1, 8, 32, 2, 0.0, 1), ValueError);
  EXPECT_THROW(generate_synthetic_dataset(1, 1, 32, 32, 1, 0.0, 1), ValueError);
  EXPECT_THROW(generate_synthetic_dataset(1, 1, 32, 32, 2, -0.5, 1), ValueError);
  EXPECT_THROW(generate_synthetic_dataset(0, 1, 32, 32, 2, 0.0, 1), ValueError);
}

TEST(Split, PaperProtocolShape) {
  const auto volumes = generate_synthetic_dataset(100, 1, 16, 16, 2, 0.0, 5);
  const DatasetSplit split = make_split(volumes, 0.10, 2, 20, 11);
  EXPECT_EQ(split.validation.size(), 2u);
  EXPECT_EQ(split.test.size(), 20u);
  EXPECT_EQ(split.labelled.size(), 8u);
  EXPECT_EQ(split.unlabelled.size(), 70u);
}

TEST(Split, FullFractionIsSupervisedMode) {
  const auto volumes = generate_synthetic_dataset(10, 1, 16, 16, 2, 0.0, 5);
  const DatasetSplit split = make_split(volumes, 1.0, 0, 0, 3);
  EXPECT_EQ(split.labelled.size(), 10u);
  EXPECT_TRUE(split.unlabelled.empty());
  EXPECT_TRUE(split.validation.empty());
  EXPECT_TRUE(split.test.empty());
}

TEST(Split, DeterministicAndDisjoint) {
  const auto volumes = generate_synthetic_dataset(30, 1, 16, 16, 2, 0.0, 5);
  const DatasetSplit a = make_split(volumes, 0.25, 3, 5, 17);
  const DatasetSplit b = make_split(volumes, 0.25, 3, 5, 17);
  EXPECT_EQ(a.labelled, b.labelled);
  EXPECT_EQ(a.unlabelled, b.unlabelled);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);

  std::set<std::string> all;
  std::size_t total = 0;
  for (const auto* list : {&a.labelled, &a.unlabelled, &a.validation, &a.test}) {
    for (const auto& id : *list) all.insert(id);
    total += list->size();
  }
  EXPECT_EQ(all.size(), total);       // pairwise disjoint
  EXPECT_EQ(all.size(), volumes.size());
}

TEST(Split, InfeasiblePartitionNamesShortfall) {
  const auto volumes = generate_synthetic_dataset(5, 1, 16, 16, 2, 0.0, 5);
  try {
    make_split(volumes, 0.5, 3, 2, 1);
    FAIL() << "expected ValueError";
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("got 5"), std::string::npos);
  }
  EXPECT_THROW(make_split(volumes, 0.0, 0, 0, 1), ValueError);
  EXPECT_THROW(make_split(volumes, 1.5, 0, 0, 1), ValueError);
}

TEST(Sampler, LabelledBatchKinds) {
  const auto volumes = generate_synthetic_dataset(6, 2, 16, 16, 2, 0.1, 2);
  const DatasetSplit split = make_split(volumes, 0.5, 1, 1, 1);
  BatchSampler sampler(volumes, split);
  Rng rng(1);
  const BatchPair batch = sampler.sample(BatchMode::labelled, 3, rng);
  ASSERT_EQ(batch.first.size(), 3u);
  ASSERT_EQ(batch.second.size(), 3u);
  for (const Raster& r : batch.first) EXPECT_EQ(r.kind, RasterKind::image);
  for (const Raster& r : batch.second) EXPECT_EQ(r.kind, RasterKind::label);
}

TEST(Sampler, DegenerateUnlabelledPoolRepeatsSlice) {
  // labelled volumes are part of the unlabelled pool, so a single labelled
  // volume with one slice gives a one-slice pool
  const auto volumes = generate_synthetic_dataset(1, 1, 16, 16, 2, 0.1, 2);
  const DatasetSplit split = make_split(volumes, 1.0, 0, 0, 1);
  BatchSampler sampler(volumes, split);
  EXPECT_EQ(sampler.unlabelled_pool_size(), 1u);
  Rng rng(3);
  const BatchPair batch = sampler.sample(BatchMode::unlabelled, 1, rng);
  EXPECT_TRUE(batch.first[0].values == batch.second[0].values);
}

TEST(Sampler, UnlabelledPoolIncludesLabelledImages) {
  const auto volumes = generate_synthetic_dataset(10, 1, 16, 16, 2, 0.1, 2);
  const DatasetSplit split = make_split(volumes, 0.3, 1, 1, 1);
  BatchSampler sampler(volumes, split);
  EXPECT_EQ(sampler.labelled_pool_size(), split.labelled.size());
  EXPECT_EQ(sampler.unlabelled_pool_size(), split.labelled.size() + split.unlabelled.size());
}

// Replaying 100 draws from the same state reproduces the batch sequence.
TEST(Sampler, ReplayUnderFixedSeed) {
  const auto volumes = generate_synthetic_dataset(8, 2, 16, 16, 2, 0.2, 4);
  const DatasetSplit split = make_split(volumes, 0.5, 1, 1, 9);
  BatchSampler sampler(volumes, split);
  Rng rng_a(77), rng_b(77);
  for (int i = 0; i < 100; ++i) {
    const BatchMode mode = i % 2 == 0 ? BatchMode::labelled : BatchMode::unlabelled;
    const BatchPair a = sampler.sample(mode, 2, rng_a);
    const BatchPair b = sampler.sample(mode, 2, rng_b);
    for (std::size_t k = 0; k < a.first.size(); ++k) {
      EXPECT_TRUE(a.first[k].values == b.first[k].values);
      EXPECT_TRUE(a.second[k].values == b.second[k].values);
    }
  }
}

TEST(Sampler, EmptyPoolIsAnError) {
  const auto volumes = generate_synthetic_dataset(3, 1, 16, 16, 2, 0.1, 2);
  DatasetSplit split = make_split(volumes, 1.0, 1, 1, 1);
  split.labelled.clear();  // leave both pools empty
  split.unlabelled.clear();
  BatchSampler sampler(volumes, split);
  Rng rng(1);
  EXPECT_THROW(sampler.sample(BatchMode::labelled, 1, rng), ValueError);
  EXPECT_THROW(sampler.sample(BatchMode::unlabelled, 1, rng), ValueError);
}

TEST(Sampler, ImagesAreMinMaxNormalized) {
  const auto volumes = generate_synthetic_dataset(2, 1, 16, 16, 2, 0.5, 6);
  const DatasetSplit split = make_split(volumes, 1.0, 0, 0, 1);
  BatchSampler sampler(volumes, split);
  Rng rng(2);
  const BatchPair batch = sampler.sample(BatchMode::labelled, 4, rng);
  for (const Raster& r : batch.first) {
    float lo = 1e9f, hi = -1e9f;
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      lo = std::min(lo, r.values[i]);
      hi = std::max(hi, r.values[i]);
    }
    EXPECT_EQ(lo, 0.0f);
    EXPECT_EQ(hi, 1.0f);
  }
}

TEST(DatasetIo, RoundTripIsBitwise) {
  const auto volumes = generate_synthetic_dataset(2, 3, 24, 16, 3, 0.7, 21);
  const fs::path dir = fresh_dir("roundtrip");
  write_dataset(volumes, 3, dir);
  const StoredDataset ds = read_dataset(dir);
  EXPECT_EQ(ds.n_classes, 3);
  EXPECT_TRUE(volumes_equal(volumes, ds.volumes));
}

TEST(DatasetIo, PayloadBytesAreExact) {
  std::vector<Volume> volumes(1);
  volumes[0].id = "vol_x";
  Raster image = make_raster(16, 16, 1, RasterKind::image);
  Rng rng(5);
  for (std::size_t i = 0; i < image.values.size(); ++i)
    image.values[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
  Raster label = make_raster(16, 16, 1, RasterKind::label);
  volumes[0].slices.push_back({image, label});

  const fs::path dir = fresh_dir("payload");
  write_dataset(volumes, 2, dir);

  std::ifstream raw(dir / "vol_x/slice_000.img.raw", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 1024u);  // 16*16 float32
  EXPECT_EQ(0, std::memcmp(bytes.data(), image.values.data(), 1024));
}

TEST(DatasetIo, MissingManifestIsManifestError) {
  const fs::path dir = fresh_dir("nomanifest");
  EXPECT_THROW(read_dataset(dir), ManifestError);
}

TEST(DatasetIo, MalformedManifestIsManifestError) {
  const fs::path dir = fresh_dir("badmanifest");
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(read_dataset(dir), ManifestError);
}

TEST(DatasetIo, UnknownVersionIsVersionError) {
  const auto volumes = generate_synthetic_dataset(1, 1, 16, 16, 2, 0.0, 1);
  const fs::path dir = fresh_dir("badversion");
  write_dataset(volumes, 2, dir);
  // bump the version field
  std::ifstream in(dir / "manifest.json");
  nlohmann::json manifest;
  in >> manifest;
  in.close();
  manifest["version"] = 99;
  std::ofstream(dir / "manifest.json") << manifest.dump();
  EXPECT_THROW(read_dataset(dir), VersionError);
}

TEST(DatasetIo, TruncatedPayloadIsShapeError) {
  const auto volumes = generate_synthetic_dataset(1, 1, 16, 16, 2, 0.0, 1);
  const fs::path dir = fresh_dir("truncated");
  write_dataset(volumes, 2, dir);
  std::ofstream(dir / "vol_000/slice_000.img.raw", std::ios::binary | std::ios::trunc) << "xx";
  EXPECT_THROW(read_dataset(dir), ShapeError);
}

TEST(DatasetIo, MissingSliceFileNamesTheFile) {
  const auto volumes = generate_synthetic_dataset(1, 1, 16, 16, 2, 0.0, 1);
  const fs::path dir = fresh_dir("missingslice");
  write_dataset(volumes, 2, dir);
  fs::remove(dir / "vol_000/slice_000.lab.raw");
  try {
    read_dataset(dir);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("slice_000.lab.raw"), std::string::npos);
  }
}

TEST(RasterChecks, ProbabilityAndLabelInvariants) {
  Raster p = make_raster(2, 2, 2, RasterKind::probability);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      p.values.at(y, x, 0) = 0.25f;
      p.values.at(y, x, 1) = 0.75f;
    }
  EXPECT_NO_THROW(validate_raster(p));
  p.values.at(0, 0, 0) = 0.5f;  // breaks the sum
  EXPECT_THROW(validate_raster(p), ValueError);

  Raster lab = make_raster(2, 2, 1, RasterKind::label);
  lab.values.at(0, 0, 0) = 1.0f;
  EXPECT_NO_THROW(validate_raster(lab, 2));
  EXPECT_THROW(validate_raster(lab, 1), ValueError);
  lab.values.at(0, 0, 0) = 0.5f;
  EXPECT_THROW(validate_raster(lab, 2), ValueError);

  Raster bad_spacing = make_raster(2, 2, 1, RasterKind::image, Spacing{0.0, 1.0});
  EXPECT_THROW(validate_raster(bad_spacing), ValueError);
}

TEST(RasterChecks, MinMaxNormalization) {
  Raster img = make_raster(2, 2, 1, RasterKind::image);
  img.values.at(0, 0, 0) = 2.0f;
  img.values.at(0, 1, 0) = 4.0f;
  img.values.at(1, 0, 0) = 6.0f;
  img.values.at(1, 1, 0) = 3.0f;
  const Raster norm = minmax_normalized(img);
  EXPECT_EQ(norm.values.at(0, 0, 0), 0.0f);
  EXPECT_EQ(norm.values.at(0, 1, 0), 0.5f);
  EXPECT_EQ(norm.values.at(1, 0, 0), 1.0f);

  Raster flat = make_raster(2, 2, 1, RasterKind::image);
  flat.values.fill(3.0f);
  const Raster norm_flat = minmax_normalized(flat);
  for (std::size_t i = 0; i < norm_flat.values.size(); ++i)
    EXPECT_EQ(norm_flat.values[i], 0.0f);
}
