#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ictseg/config.hpp"

using namespace ictseg;
namespace fs = std::filesystem;

TEST(Config, DefaultsMaterialize) {
  const TrainConfig cfg = materialize_config({});
  EXPECT_EQ(cfg.model.architecture, Architecture::tiny_unet);
  EXPECT_EQ(cfg.model.n_classes, 2);
  EXPECT_EQ(cfg.optim.kind, OptimizerKind::adam);
  EXPECT_EQ(cfg.optim.learning_rate, 1e-5);
  EXPECT_EQ(cfg.lambda_ema, 0.99);
  EXPECT_EQ(cfg.total_iters, 2000);
  EXPECT_EQ(cfg.batch_labelled, 4);
  EXPECT_EQ(cfg.batch_unlabelled, 4);
  EXPECT_EQ(cfg.mix.mode, AlphaMode::fixed);
  EXPECT_EQ(cfg.mix.alpha_fixed, 0.5);
  EXPECT_EQ(cfg.ramp.shape, RampShape::sigmoid_exp);
  EXPECT_EQ(cfg.ramp.w_max, 1.0);
  EXPECT_EQ(cfg.ramp.ramp_iters, 800);  // 40% of total_iters
  EXPECT_FALSE(cfg.ema_after_step);
  EXPECT_EQ(cfg.model.init_seed, cfg.seed);
}

TEST(Config, FileParsingAndOverrides) {
  const fs::path path = fs::temp_directory_path() / "ictseg_cfg_test.cfg";
  std::ofstream(path) << "# toy setup\n"
                      << "train.total_iters = 100\n"
                      << "ramp.w_max = 2.5   # plateau\n"
                      << "mix.mode = beta\n"
                      << "\n";
  KeyValues kv = parse_config_file(path);
  apply_override(kv, "ramp.w_max=0");
  apply_override(kv, "train.seed=9");
  const TrainConfig cfg = materialize_config(kv);
  EXPECT_EQ(cfg.total_iters, 100);
  EXPECT_EQ(cfg.ramp.w_max, 0.0);
  EXPECT_EQ(cfg.mix.mode, AlphaMode::beta);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.ramp.ramp_iters, 40);
}

TEST(Config, UnknownKeyNamed) {
  try {
    materialize_config({{"train.rate", "0.1"}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.rate"), std::string::npos);
  }
}

TEST(Config, InvalidValuesNameTheField) {
  try {
    materialize_config({{"data.label_fraction", "0"}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data.label_fraction"), std::string::npos);
  }
  EXPECT_THROW(materialize_config({{"data.label_fraction", "1.5"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"train.total_iters", "0"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"train.learning_rate", "0"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"train.lambda_ema", "1.5"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"train.batch_labelled", "0"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"model.n_classes", "1"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"train.total_iters", "abc"}}), ConfigError);
  EXPECT_THROW(materialize_config({{"mix.mode", "banana"}}), ConfigError);
}

TEST(Config, BadSyntaxRejected) {
  const fs::path path = fs::temp_directory_path() / "ictseg_cfg_bad.cfg";
  std::ofstream(path) << "train.total_iters 100\n";
  EXPECT_THROW(parse_config_file(path), ConfigError);
  KeyValues kv;
  EXPECT_THROW(apply_override(kv, "no_equals"), ConfigError);
  EXPECT_THROW(apply_override(kv, "=5"), ConfigError);
}

TEST(Config, ResolvedJsonCoversEveryKeyAndHashIsStable) {
  const TrainConfig cfg = materialize_config({{"train.seed", "3"}});
  const nlohmann::json j = resolved_json(cfg);
  for (const char* key :
       {"model.architecture", "model.n_classes", "mix.mode", "mix.alpha", "mix.beta_a",
        "mix.resample", "ramp.shape", "ramp.w_max", "ramp.iters", "train.lambda_ema",
        "train.total_iters", "train.batch_labelled", "train.batch_unlabelled",
        "train.learning_rate", "train.optimizer", "train.adam_beta1", "train.adam_beta2",
        "train.adam_eps", "train.seed", "train.eval_every", "train.checkpoint_every",
        "train.ema_after_step", "data.label_fraction", "data.n_validation", "data.n_test",
        "config_hash"})
    EXPECT_TRUE(j.contains(key)) << key;

  EXPECT_EQ(config_hash(cfg), config_hash(cfg));
  TrainConfig other = cfg;
  other.seed = 4;
  EXPECT_NE(config_hash(cfg), config_hash(other));
}

TEST(Config, ResolvedRoundTripPreservesHash) {
  const TrainConfig cfg = materialize_config(
      {{"train.learning_rate", "1e-3"}, {"ramp.w_max", "12.5"}, {"mix.mode", "beta"}});
  const fs::path path = fs::temp_directory_path() / "ictseg_cfg_resolved.json";
  write_resolved_config(cfg, path);
  const TrainConfig reread = read_resolved_config(path);
  EXPECT_EQ(config_hash(cfg), config_hash(reread));
  EXPECT_EQ(reread.optim.learning_rate, 1e-3);
  EXPECT_EQ(reread.ramp.w_max, 12.5);
}
