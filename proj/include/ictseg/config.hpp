#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ictseg/mixing.hpp"
#include "ictseg/net/architectures.hpp"
#include "ictseg/objective.hpp"
#include "ictseg/optim.hpp"

namespace ictseg {

// Every hyperparameter of a training run, fully materialized. ramp.iters
// left unset in the sources defaults to 40% of train.total_iters.
struct TrainConfig {
  ModelSpec model;
  MixPolicy mix;
  RampSpec ramp{1.0, 0, RampShape::sigmoid_exp};  // ramp_iters 0 = derive from total
  double lambda_ema = 0.99;
  long total_iters = 2000;
  int batch_labelled = 4;
  int batch_unlabelled = 4;
  OptimizerConfig optim;
  std::uint64_t seed = 1;
  long eval_every = 500;
  long checkpoint_every = 1000;
  bool ema_after_step = false;  // literal Algorithm-1 order is EMA before the step
  double label_fraction = 0.1;
  int n_validation = 2;
  int n_test = 20;
};

using KeyValues = std::map<std::string, std::string>;

// Flat `section.key = value` lines; '#' starts a comment.
inline KeyValues parse_config_text(std::istream& in, const std::string& origin) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string stripped = strip(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(stripped.substr(0, eq));
    const std::string value = strip(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

inline KeyValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  return parse_config_text(in, path.filename().string());
}

// `--set key=value` override.
inline void apply_override(KeyValues& kv, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  kv[assignment.substr(0, eq)] = assignment.substr(eq + 1);
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out;
  in >> out;
  if (in.fail() || !in.eof())
    throw ConfigError(key + ": cannot parse '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

}  // namespace detail

inline void validate_config(const TrainConfig& cfg) {
  validate_model_spec(cfg.model);
  validate_policy(cfg.mix);
  validate_ramp(cfg.ramp);
  validate_optimizer(cfg.optim);
  if (!(cfg.optim.learning_rate > 0.0))
    throw ConfigError("train.learning_rate must be > 0");
  if (cfg.lambda_ema < 0.0 || cfg.lambda_ema > 1.0)
    throw ConfigError("train.lambda_ema must lie in [0,1]");
  if (cfg.total_iters < 1) throw ConfigError("train.total_iters must be >= 1");
  if (cfg.batch_labelled < 1) throw ConfigError("train.batch_labelled must be >= 1");
  if (cfg.batch_unlabelled < 1) throw ConfigError("train.batch_unlabelled must be >= 1");
  if (cfg.eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (cfg.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (!(cfg.label_fraction > 0.0) || cfg.label_fraction > 1.0)
    throw ConfigError("data.label_fraction must lie in (0, 1]");
  if (cfg.n_validation < 0) throw ConfigError("data.n_validation must be >= 0");
  if (cfg.n_test < 0) throw ConfigError("data.n_test must be >= 0");
}

// Applies defaults, key parsing and validation; unknown keys are errors.
inline TrainConfig materialize_config(const KeyValues& kv) {
  TrainConfig cfg;
  bool ramp_iters_set = false;
  for (const auto& [key, value] : kv) {
    if (key == "model.architecture") cfg.model.architecture = architecture_from_string(value);
    else if (key == "model.n_classes") cfg.model.n_classes = detail::parse_number<int>(key, value);
    else if (key == "mix.mode") {
      if (value == "fixed") cfg.mix.mode = AlphaMode::fixed;
      else if (value == "beta") cfg.mix.mode = AlphaMode::beta;
      else throw ConfigError("mix.mode: expected fixed or beta, got '" + value + "'");
    } else if (key == "mix.alpha") cfg.mix.alpha_fixed = detail::parse_number<double>(key, value);
    else if (key == "mix.beta_a") cfg.mix.beta_a = detail::parse_number<double>(key, value);
    else if (key == "mix.resample") {
      if (value == "per_batch") cfg.mix.resample = AlphaResample::per_batch;
      else if (value == "per_sample") cfg.mix.resample = AlphaResample::per_sample;
      else throw ConfigError("mix.resample: expected per_batch or per_sample");
    } else if (key == "ramp.shape") cfg.ramp.shape = ramp_shape_from_string(value);
    else if (key == "ramp.w_max") cfg.ramp.w_max = detail::parse_number<double>(key, value);
    else if (key == "ramp.iters") {
      cfg.ramp.ramp_iters = detail::parse_number<long>(key, value);
      ramp_iters_set = true;
    } else if (key == "train.lambda_ema") cfg.lambda_ema = detail::parse_number<double>(key, value);
    else if (key == "train.total_iters") cfg.total_iters = detail::parse_number<long>(key, value);
    else if (key == "train.batch_labelled") cfg.batch_labelled = detail::parse_number<int>(key, value);
    else if (key == "train.batch_unlabelled") cfg.batch_unlabelled = detail::parse_number<int>(key, value);
    else if (key == "train.learning_rate") cfg.optim.learning_rate = detail::parse_number<double>(key, value);
    else if (key == "train.optimizer") cfg.optim.kind = optimizer_from_string(value);
    else if (key == "train.adam_beta1") cfg.optim.beta1 = detail::parse_number<double>(key, value);
    else if (key == "train.adam_beta2") cfg.optim.beta2 = detail::parse_number<double>(key, value);
    else if (key == "train.adam_eps") cfg.optim.eps = detail::parse_number<double>(key, value);
    else if (key == "train.seed") cfg.seed = detail::parse_number<std::uint64_t>(key, value);
    else if (key == "train.eval_every") cfg.eval_every = detail::parse_number<long>(key, value);
    else if (key == "train.checkpoint_every") cfg.checkpoint_every = detail::parse_number<long>(key, value);
    else if (key == "train.ema_after_step") cfg.ema_after_step = detail::parse_bool(key, value);
    else if (key == "data.label_fraction") cfg.label_fraction = detail::parse_number<double>(key, value);
    else if (key == "data.n_validation") cfg.n_validation = detail::parse_number<int>(key, value);
    else if (key == "data.n_test") cfg.n_test = detail::parse_number<int>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (!ramp_iters_set || cfg.ramp.ramp_iters == 0)
    cfg.ramp.ramp_iters = std::max<long>(1, (cfg.total_iters * 2) / 5);
  cfg.model.init_seed = cfg.seed;
  validate_config(cfg);
  return cfg;
}

// Every effective hyperparameter, alphabetically keyed; the basis of the
// config hash and of config.resolved.json.
inline nlohmann::json resolved_fields(const TrainConfig& cfg) {
  nlohmann::json j;
  j["model.architecture"] = to_string(cfg.model.architecture);
  j["model.n_classes"] = cfg.model.n_classes;
  j["mix.mode"] = cfg.mix.mode == AlphaMode::fixed ? "fixed" : "beta";
  j["mix.alpha"] = cfg.mix.alpha_fixed;
  j["mix.beta_a"] = cfg.mix.beta_a;
  j["mix.resample"] = cfg.mix.resample == AlphaResample::per_batch ? "per_batch" : "per_sample";
  j["ramp.shape"] = to_string(cfg.ramp.shape);
  j["ramp.w_max"] = cfg.ramp.w_max;
  j["ramp.iters"] = cfg.ramp.ramp_iters;
  j["train.lambda_ema"] = cfg.lambda_ema;
  j["train.total_iters"] = cfg.total_iters;
  j["train.batch_labelled"] = cfg.batch_labelled;
  j["train.batch_unlabelled"] = cfg.batch_unlabelled;
  j["train.learning_rate"] = cfg.optim.learning_rate;
  j["train.optimizer"] = to_string(cfg.optim.kind);
  j["train.adam_beta1"] = cfg.optim.beta1;
  j["train.adam_beta2"] = cfg.optim.beta2;
  j["train.adam_eps"] = cfg.optim.eps;
  j["train.seed"] = cfg.seed;
  j["train.eval_every"] = cfg.eval_every;
  j["train.checkpoint_every"] = cfg.checkpoint_every;
  j["train.ema_after_step"] = cfg.ema_after_step;
  j["data.label_fraction"] = cfg.label_fraction;
  j["data.n_validation"] = cfg.n_validation;
  j["data.n_test"] = cfg.n_test;
  return j;
}

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline std::string config_hash(const TrainConfig& cfg) {
  return fnv1a_hex(resolved_fields(cfg).dump());
}

inline nlohmann::json resolved_json(const TrainConfig& cfg) {
  nlohmann::json j = resolved_fields(cfg);
  j["config_hash"] = config_hash(cfg);
  return j;
}

inline void write_resolved_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << resolved_json(cfg).dump(2) << "\n";
}

// Reads back a config.resolved.json written by write_resolved_config.
inline TrainConfig read_resolved_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("malformed resolved config: " + std::string(e.what()));
  }
  KeyValues kv;
  for (const auto& [key, value] : j.items()) {
    if (key == "config_hash") continue;
    if (value.is_string()) kv[key] = value.get<std::string>();
    else kv[key] = value.dump();
  }
  return materialize_config(kv);
}

}  // namespace ictseg
