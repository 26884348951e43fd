#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ictseg/net/architectures.hpp"
#include "ictseg/net/params.hpp"
#include "ictseg/rng.hpp"

namespace ictseg {

constexpr char kCheckpointMagic[8] = {'I', 'C', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr int kCheckpointVersion = 1;

// Full training snapshot: both parameter sets, optimizer moments, rng
// streams and the iteration counter, enough for bit-identical resume.
struct Checkpoint {
  long iteration = 0;
  std::string config_hash;
  ModelSpec model;
  double lambda_ema = 0.99;
  long optimizer_step = 0;
  Rng::State rng_labelled{};
  Rng::State rng_unlabelled{};
  Rng::State rng_alpha{};
  ParamSet<float> student;
  ParamSet<float> teacher;
  ParamSet<float> opt_m;
  ParamSet<float> opt_v;
};

namespace detail {

inline nlohmann::json entries_manifest(const ParamSet<float>& p) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < p.entry_count(); ++i) {
    const auto& e = p.entry(i);
    out.push_back({{"name", e.name}, {"shape", e.shape}, {"dtype", "float32"}});
  }
  return out;
}

inline void write_params(std::ofstream& out, const ParamSet<float>& p) {
  for (std::size_t i = 0; i < p.entry_count(); ++i) {
    const auto& v = p.entry(i).values;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
}

inline void read_params(std::ifstream& in, ParamSet<float>& p, const std::string& path) {
  for (std::size_t i = 0; i < p.entry_count(); ++i) {
    auto& v = p.entry(i).values;
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!in) throw ShapeError("checkpoint '" + path + "': truncated payload");
  }
}

inline nlohmann::json rng_json(const Rng::State& s) {
  return nlohmann::json::array({s[0], s[1], s[2], s[3]});
}

inline Rng::State rng_from_json(const nlohmann::json& j) {
  return {j.at(0).get<std::uint64_t>(), j.at(1).get<std::uint64_t>(),
          j.at(2).get<std::uint64_t>(), j.at(3).get<std::uint64_t>()};
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["iteration"] = ckpt.iteration;
  manifest["config_hash"] = ckpt.config_hash;
  manifest["model"] = {{"architecture", to_string(ckpt.model.architecture)},
                       {"n_classes", ckpt.model.n_classes},
                       {"init_seed", ckpt.model.init_seed},
                       {"in_channels", ckpt.model.in_channels}};
  manifest["lambda_ema"] = ckpt.lambda_ema;
  manifest["optimizer_step"] = ckpt.optimizer_step;
  manifest["rng"] = {{"labelled", detail::rng_json(ckpt.rng_labelled)},
                     {"unlabelled", detail::rng_json(ckpt.rng_unlabelled)},
                     {"alpha", detail::rng_json(ckpt.rng_alpha)}};
  manifest["entries"] = detail::entries_manifest(ckpt.student);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::write_params(out, ckpt.student);
  detail::write_params(out, ckpt.teacher);
  detail::write_params(out, ckpt.opt_m);
  detail::write_params(out, ckpt.opt_v);
  if (!out) throw IoError("short write to checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ManifestError("'" + path.string() + "' is not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ManifestError("checkpoint '" + path.string() + "': truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("checkpoint manifest: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw VersionError("unsupported checkpoint version " + std::to_string(version));
    ckpt.iteration = manifest.at("iteration").get<long>();
    ckpt.config_hash = manifest.at("config_hash").get<std::string>();
    const auto& jm = manifest.at("model");
    ckpt.model.architecture = architecture_from_string(jm.at("architecture").get<std::string>());
    ckpt.model.n_classes = jm.at("n_classes").get<int>();
    ckpt.model.init_seed = jm.at("init_seed").get<std::uint64_t>();
    ckpt.model.in_channels = jm.at("in_channels").get<int>();
    ckpt.lambda_ema = manifest.at("lambda_ema").get<double>();
    ckpt.optimizer_step = manifest.at("optimizer_step").get<long>();
    ckpt.rng_labelled = detail::rng_from_json(manifest.at("rng").at("labelled"));
    ckpt.rng_unlabelled = detail::rng_from_json(manifest.at("rng").at("unlabelled"));
    ckpt.rng_alpha = detail::rng_from_json(manifest.at("rng").at("alpha"));
    for (const auto& je : manifest.at("entries")) {
      if (je.at("dtype").get<std::string>() != "float32")
        throw VersionError("unsupported checkpoint dtype " + je.at("dtype").get<std::string>());
      ckpt.student.add(je.at("name").get<std::string>(), je.at("shape").get<std::vector<int>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("checkpoint manifest is missing fields: " + std::string(e.what()));
  }

  ckpt.teacher = ckpt.student;
  ckpt.opt_m = ckpt.student;
  ckpt.opt_v = ckpt.student;
  detail::read_params(in, ckpt.student, path.string());
  detail::read_params(in, ckpt.teacher, path.string());
  detail::read_params(in, ckpt.opt_m, path.string());
  detail::read_params(in, ckpt.opt_v, path.string());
  return ckpt;
}

}  // namespace ictseg
