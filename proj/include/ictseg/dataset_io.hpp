#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ictseg/dataset.hpp"
#include "ictseg/raster.hpp"

namespace ictseg {

static_assert(std::endian::native == std::endian::little,
              "on-disk rasters are little-endian; big-endian hosts are unsupported");

constexpr int kDatasetFormatVersion = 1;

struct StoredDataset {
  std::vector<Volume> volumes;
  int n_classes = 2;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("missing or unreadable file '" + path.string() + "'");
  const std::streamsize bytes = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(bytes));
  in.read(buf.data(), bytes);
  if (!in) throw IoError("short read from '" + path.string() + "'");
  return buf;
}

}  // namespace detail

// Dataset directory layout: manifest.json plus one raw file per slice
// raster, row-major little-endian, float32 images and uint8 labels.
// Payload bytes survive the round trip bit-exactly.
inline void write_dataset(const std::vector<Volume>& volumes, int n_classes,
                          const std::filesystem::path& dir) {
  if (volumes.empty()) throw ValueError("write_dataset: no volumes");
  const Raster& ref = volumes.front().slices.front().image;
  for (const Volume& v : volumes) {
    validate_volume(v, n_classes);
    for (const Slice& s : v.slices)
      if (s.image.height() != ref.height() || s.image.width() != ref.width() ||
          s.image.channels() != ref.channels() || !(s.image.spacing == ref.spacing))
        throw ShapeError("write_dataset: volume '" + v.id + "' differs from dataset shape");
  }

  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["version"] = kDatasetFormatVersion;
  manifest["shape"] = {{"height", ref.height()}, {"width", ref.width()},
                       {"channels", ref.channels()}};
  manifest["spacing_mm"] = {ref.spacing.y_mm, ref.spacing.x_mm};
  manifest["encoding"] = {{"image", "float32_le"}, {"label", "uint8_le"}};
  manifest["n_classes"] = n_classes;
  manifest["volumes"] = nlohmann::json::array();

  for (const Volume& v : volumes) {
    std::filesystem::create_directories(dir / v.id);
    nlohmann::json jv;
    jv["id"] = v.id;
    jv["slices"] = nlohmann::json::array();
    for (std::size_t si = 0; si < v.slices.size(); ++si) {
      std::string stem = std::to_string(si);
      stem.insert(0, 3 - std::min<std::size_t>(3, stem.size()), '0');
      const std::string img_rel = v.id + "/slice_" + stem + ".img.raw";
      const std::string lab_rel = v.id + "/slice_" + stem + ".lab.raw";

      const Raster& image = v.slices[si].image;
      detail::write_file(dir / img_rel, image.values.data(),
                         image.values.size() * sizeof(float));

      const Raster& label = v.slices[si].label;
      std::vector<std::uint8_t> lab(label.values.size());
      for (std::size_t i = 0; i < lab.size(); ++i)
        lab[i] = static_cast<std::uint8_t>(label.values[i]);
      detail::write_file(dir / lab_rel, lab.data(), lab.size());

      jv["slices"].push_back({{"image", img_rel}, {"label", lab_rel}});
    }
    manifest["volumes"].push_back(std::move(jv));
  }

  const std::string text = manifest.dump(2) + "\n";
  detail::write_file(dir / "manifest.json", text.data(), text.size());
}

inline StoredDataset read_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw ManifestError("no manifest.json in '" + dir.string() + "'");

  nlohmann::json manifest;
  try {
    const std::vector<char> text = detail::read_file(manifest_path);
    manifest = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("malformed manifest.json: " + std::string(e.what()));
  }

  StoredDataset ds;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kDatasetFormatVersion)
      throw VersionError("unsupported dataset format version " + std::to_string(version));

    const auto& shape = manifest.at("shape");
    const int h = shape.at("height").get<int>();
    const int w = shape.at("width").get<int>();
    const int c = shape.at("channels").get<int>();
    Spacing spacing{manifest.at("spacing_mm").at(0).get<double>(),
                    manifest.at("spacing_mm").at(1).get<double>()};
    const std::string img_enc = manifest.at("encoding").at("image").get<std::string>();
    const std::string lab_enc = manifest.at("encoding").at("label").get<std::string>();
    if (img_enc != "float32_le" || lab_enc != "uint8_le")
      throw VersionError("unsupported value encoding " + img_enc + "/" + lab_enc);
    ds.n_classes = manifest.at("n_classes").get<int>();

    for (const auto& jv : manifest.at("volumes")) {
      Volume vol{jv.at("id").get<std::string>(), {}};
      for (const auto& js : jv.at("slices")) {
        const std::string img_rel = js.at("image").get<std::string>();
        const std::string lab_rel = js.at("label").get<std::string>();

        const std::vector<char> img_bytes = detail::read_file(dir / img_rel);
        if (img_bytes.size() != static_cast<std::size_t>(h) * w * c * sizeof(float))
          throw ShapeError("image payload '" + img_rel + "' has " +
                           std::to_string(img_bytes.size()) + " bytes, expected " +
                           std::to_string(static_cast<std::size_t>(h) * w * c * sizeof(float)));
        Raster image = make_raster(h, w, c, RasterKind::image, spacing);
        std::memcpy(image.values.data(), img_bytes.data(), img_bytes.size());

        const std::vector<char> lab_bytes = detail::read_file(dir / lab_rel);
        if (lab_bytes.size() != static_cast<std::size_t>(h) * w)
          throw ShapeError("label payload '" + lab_rel + "' has " +
                           std::to_string(lab_bytes.size()) + " bytes, expected " +
                           std::to_string(static_cast<std::size_t>(h) * w));
        Raster label = make_raster(h, w, 1, RasterKind::label, spacing);
        for (std::size_t i = 0; i < lab_bytes.size(); ++i)
          label.values[i] = static_cast<float>(static_cast<std::uint8_t>(lab_bytes[i]));

        vol.slices.push_back(Slice{std::move(image), std::move(label)});
      }
      ds.volumes.push_back(std::move(vol));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("manifest.json is missing required fields: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace ictseg
