#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ictseg/ictseg.hpp"

using namespace ictseg;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(const KeyValues& extra = {}) {
  KeyValues kv{{"model.architecture", "tiny_unet"},
               {"model.n_classes", "2"},
               {"train.total_iters", "30"},
               {"train.batch_labelled", "2"},
               {"train.batch_unlabelled", "2"},
               {"train.learning_rate", "0.001"},
               {"train.seed", "5"},
               {"train.eval_every", "0"},
               {"train.checkpoint_every", "0"},
               {"ramp.iters", "10"},
               {"data.label_fraction", "0.5"},
               {"data.n_validation", "1"},
               {"data.n_test", "2"}};
  for (const auto& [k, v] : extra) kv[k] = v;
  return materialize_config(kv);
}

std::vector<Volume> tiny_volumes(int n = 10) {
  return generate_synthetic_dataset(n, 1, 16, 16, 2, 0.2, 77);
}

bool params_equal(const ParamSet<float>& a, const ParamSet<float>& b) { return a == b; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ictseg_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(TrainStep, ZeroLearningRateMovesOnlyTheTeacher) {
  TrainConfig cfg = tiny_config();
  cfg.optim.learning_rate = 0.0;
  cfg.lambda_ema = 0.9;
  const auto volumes = tiny_volumes();
  Trainer trainer(cfg, volumes);

  // decouple the teacher so the EMA pull is visible
  Trainer scratch(cfg, volumes);
  ParamSet<float> teacher0 = scratch.state().pair.teacher;
  for (std::size_t e = 0; e < teacher0.entry_count(); ++e)
    for (float& v : teacher0.entry(e).values) v += 1.0f;
  Checkpoint ckpt = trainer.make_checkpoint();
  ckpt.teacher = teacher0;
  trainer.restore(ckpt);

  const ParamSet<float> student_before = trainer.state().pair.student;
  trainer.step();
  EXPECT_TRUE(params_equal(trainer.state().pair.student, student_before));
  // theta' <- (1-lambda) theta + lambda theta'_old, elementwise in float
  const float lam = 0.9f;
  for (std::size_t e = 0; e < teacher0.entry_count(); ++e)
    for (std::size_t i = 0; i < teacher0.entry(e).values.size(); ++i) {
      const float expected =
          (1.0f - lam) * student_before.entry(e).values[i] + lam * teacher0.entry(e).values[i];
      ASSERT_EQ(trainer.state().pair.teacher.entry(e).values[i], expected);
    }
}

TEST(TrainStep, DeterministicReplayOverFiftySteps) {
  const TrainConfig cfg = tiny_config({{"train.total_iters", "50"}});
  const auto volumes = tiny_volumes();
  Trainer a(cfg, volumes), b(cfg, volumes);
  for (int i = 0; i < 50; ++i) {
    const LossReport ra = a.step();
    const LossReport rb = b.step();
    ASSERT_EQ(ra.l_ce, rb.l_ce);
    ASSERT_EQ(ra.l_u, rb.l_u);
    ASSERT_EQ(ra.r_t, rb.r_t);
    ASSERT_EQ(ra.total, rb.total);
  }
  EXPECT_TRUE(params_equal(a.state().pair.student, b.state().pair.student));
  EXPECT_TRUE(params_equal(a.state().pair.teacher, b.state().pair.teacher));
}

// w_max = 0 must be bitwise-identical to a loop with the unsupervised branch
// physically absent: same sampling stream, same gradients, same updates.
TEST(TrainStep, SupervisedGatingIsBitExact) {
  const TrainConfig cfg = tiny_config({{"ramp.w_max", "0"}, {"train.total_iters", "25"}});
  const auto volumes = tiny_volumes();

  Trainer gated(cfg, volumes);
  EXPECT_FALSE(gated.unsupervised_active());
  for (int i = 0; i < 25; ++i) {
    const LossReport r = gated.step();
    ASSERT_EQ(r.l_u, 0.0);
    ASSERT_EQ(r.total, r.l_ce);
  }

  // supervised-only comparator built from the same pieces, no unsupervised
  // branch at all
  const Network<float> net = build_network<float>(cfg.model);
  const DatasetSplit split =
      make_split(volumes, cfg.label_fraction, cfg.n_validation, cfg.n_test, cfg.seed);
  const BatchSampler sampler(volumes, split);
  StudentTeacher<float> pair =
      make_student_teacher(init_params(net, cfg.model.init_seed), cfg.lambda_ema);
  OptimizerState<float> opt = make_optimizer_state(pair.student);
  Rng rng_labelled(derived_seed(cfg.seed, 1));
  Workspace<float> ws = net.make_workspace();
  ParamSet<float> grads = net.param_template();
  for (int t = 0; t < 25; ++t) {
    const BatchPair batch = sampler.sample(BatchMode::labelled, cfg.batch_labelled, rng_labelled);
    const Tensor<float>& probs = net.forward(pair.student, to_tensor<float>(batch.first), ws);
    auto [l_ce, d] = cross_entropy_with_grad(probs, to_label_tensor(batch.second));
    (void)l_ce;
    grads.fill(0.0f);
    net.backward(pair.student, ws, d, grads);
    ema_update(pair);
    optimizer_step(pair.student, grads, opt, cfg.optim);
  }

  EXPECT_TRUE(params_equal(gated.state().pair.student, pair.student));
  EXPECT_TRUE(params_equal(gated.state().pair.teacher, pair.teacher));
}

// The teacher is exactly the EMA recursion over pre-step student snapshots
// (literal Algorithm-1 order); flipping ema_after_step switches it to the
// post-step student.
TEST(TrainStep, TeacherProvenanceAudit) {
  for (const bool after : {false, true}) {
    TrainConfig cfg = tiny_config({{"train.total_iters", "12"}});
    cfg.ema_after_step = after;
    const auto volumes = tiny_volumes();
    Trainer trainer(cfg, volumes);
    ParamSet<float> expected_teacher = trainer.state().pair.teacher;
    const float lam = static_cast<float>(cfg.lambda_ema);
    for (int t = 0; t < 12; ++t) {
      const ParamSet<float> pre = trainer.state().pair.student;
      trainer.step();
      const ParamSet<float>& ref = after ? trainer.state().pair.student : pre;
      for (std::size_t e = 0; e < expected_teacher.entry_count(); ++e) {
        auto& ev = expected_teacher.entry(e).values;
        const auto& sv = ref.entry(e).values;
        for (std::size_t i = 0; i < ev.size(); ++i)
          ev[i] = (1.0f - lam) * sv[i] + lam * ev[i];
      }
      ASSERT_TRUE(params_equal(trainer.state().pair.teacher, expected_teacher))
          << "ema_after_step=" << after << " iteration " << t;
    }
  }
}

TEST(TrainStep, BetaPerSampleAlphaPathIsDeterministic) {
  const TrainConfig cfg = tiny_config(
      {{"mix.mode", "beta"}, {"mix.beta_a", "0.4"}, {"mix.resample", "per_sample"},
       {"train.total_iters", "10"}});
  const auto volumes = tiny_volumes();
  Trainer a(cfg, volumes), b(cfg, volumes);
  for (int i = 0; i < 10; ++i) {
    const LossReport ra = a.step();
    const LossReport rb = b.step();
    ASSERT_EQ(ra.l_u, rb.l_u);
    ASSERT_TRUE(std::isfinite(ra.total));
  }
  // beta draws advance the alpha stream
  EXPECT_NE(a.state().rng_alpha.state(), Rng(derived_seed(cfg.seed, 3)).state());
}

TEST(TrainStep, NonFiniteLossNamesIterationAndComponent) {
  const TrainConfig cfg = tiny_config();
  const auto volumes = tiny_volumes();
  Trainer trainer(cfg, volumes);
  for (int i = 0; i < 3; ++i) trainer.step();
  // corrupt the student so the next forward pass goes NaN
  Checkpoint ckpt = trainer.make_checkpoint();
  ckpt.student.entry(0).values[0] = std::numeric_limits<float>::quiet_NaN();
  trainer.restore(ckpt);
  try {
    trainer.step();
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration 3"), std::string::npos);
    EXPECT_NE(msg.find("l_ce"), std::string::npos);
  }
}

TEST(TrainStep, SteppingPastTotalItersRejected) {
  const TrainConfig cfg = tiny_config({{"train.total_iters", "1"}});
  const auto volumes = tiny_volumes();
  Trainer trainer(cfg, volumes);
  trainer.step();
  EXPECT_THROW(trainer.step(), TrainingError);
}

TEST(Checkpoint, SaveLoadRoundTripIsBitwise) {
  const TrainConfig cfg = tiny_config();
  const auto volumes = tiny_volumes();
  Trainer trainer(cfg, volumes);
  for (int i = 0; i < 5; ++i) trainer.step();

  const Checkpoint before = trainer.make_checkpoint();
  const fs::path path = fresh_dir("ckpt") / "state.ckpt";
  save_checkpoint(before, path);
  const Checkpoint after = load_checkpoint(path);

  EXPECT_EQ(after.iteration, before.iteration);
  EXPECT_EQ(after.config_hash, before.config_hash);
  EXPECT_EQ(after.optimizer_step, before.optimizer_step);
  EXPECT_EQ(after.rng_labelled, before.rng_labelled);
  EXPECT_EQ(after.rng_unlabelled, before.rng_unlabelled);
  EXPECT_EQ(after.rng_alpha, before.rng_alpha);
  EXPECT_TRUE(after.student == before.student);
  EXPECT_TRUE(after.teacher == before.teacher);
  EXPECT_TRUE(after.opt_m == before.opt_m);
  EXPECT_TRUE(after.opt_v == before.opt_v);
}

TEST(Checkpoint, CorruptFilesGetDistinctErrors) {
  const fs::path dir = fresh_dir("ckpt_bad");
  std::ofstream(dir / "not_a_ckpt.bin", std::ios::binary) << "garbage";
  EXPECT_THROW(load_checkpoint(dir / "not_a_ckpt.bin"), ManifestError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST(Checkpoint, HashMismatchRejectedOnRestore) {
  const auto volumes = tiny_volumes();
  Trainer a(tiny_config(), volumes);
  const Checkpoint ckpt = a.make_checkpoint();
  Trainer b(tiny_config({{"train.learning_rate", "0.002"}}), volumes);
  EXPECT_THROW(b.restore(ckpt), ConfigError);
}

TEST(RunTraining, SingleIterationProducesAllArtifacts) {
  const auto volumes = tiny_volumes();
  const fs::path data_dir = fresh_dir("run_t1_data");
  write_dataset(volumes, 2, data_dir);
  const fs::path out_dir = fresh_dir("run_t1_out");
  const TrainConfig cfg = tiny_config({{"train.total_iters", "1"}});

  const MetricReport report = run_training(cfg, data_dir, out_dir, {}, true);
  EXPECT_TRUE(fs::exists(out_dir / "config.resolved.json"));
  EXPECT_TRUE(fs::exists(out_dir / "report.json"));
  EXPECT_TRUE(fs::exists(out_dir / "checkpoints/iter_1.ckpt"));

  std::ifstream hist(out_dir / "history.csv");
  std::string line;
  int rows = 0;
  std::getline(hist, line);
  EXPECT_EQ(line, "iteration,l_ce,l_u,r_t,total");
  while (std::getline(hist, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 1);

  const MetricReport reread = read_report(out_dir / "report.json");
  EXPECT_EQ(reread.dsc_avg, report.dsc_avg);
  EXPECT_EQ(reread.config_hash, config_hash(cfg));
}

TEST(RunTraining, IdenticalRunsProduceIdenticalFiles) {
  const auto volumes = tiny_volumes();
  const fs::path data_dir = fresh_dir("run_det_data");
  write_dataset(volumes, 2, data_dir);
  const TrainConfig cfg = tiny_config({{"train.total_iters", "20"}});

  const fs::path out_a = fresh_dir("run_det_a");
  const fs::path out_b = fresh_dir("run_det_b");
  run_training(cfg, data_dir, out_a, {}, true);
  run_training(cfg, data_dir, out_b, {}, true);
  EXPECT_EQ(slurp(out_a / "history.csv"), slurp(out_b / "history.csv"));
  EXPECT_EQ(slurp(out_a / "report.json"), slurp(out_b / "report.json"));
  EXPECT_EQ(slurp(out_a / "config.resolved.json"), slurp(out_b / "config.resolved.json"));
}

TEST(RunTraining, ResumeReproducesTheUninterruptedRun) {
  const auto volumes = tiny_volumes();
  const fs::path data_dir = fresh_dir("run_res_data");
  write_dataset(volumes, 2, data_dir);
  const TrainConfig cfg = tiny_config({{"train.total_iters", "40"}, {"train.checkpoint_every", "20"}});

  const fs::path full_dir = fresh_dir("run_res_full");
  run_training(cfg, data_dir, full_dir, {}, true);

  const fs::path resumed_dir = fresh_dir("run_res_resumed");
  run_training(cfg, data_dir, resumed_dir, full_dir / "checkpoints/iter_20.ckpt", true);

  EXPECT_EQ(slurp(full_dir / "report.json"), slurp(resumed_dir / "report.json"));

  // the resumed history covers iterations 20..39 and matches the tail
  std::ifstream full_hist(full_dir / "history.csv");
  std::vector<std::string> full_rows;
  std::string line;
  while (std::getline(full_hist, line)) full_rows.push_back(line);
  std::ifstream res_hist(resumed_dir / "history.csv");
  std::vector<std::string> res_rows;
  while (std::getline(res_hist, line)) res_rows.push_back(line);
  ASSERT_EQ(res_rows.size(), 21u);  // header + 20 rows
  for (std::size_t i = 1; i < res_rows.size(); ++i)
    EXPECT_EQ(res_rows[i], full_rows[20 + i]);
}

TEST(RunTraining, MismatchedClassCountRejected) {
  const auto volumes = tiny_volumes();
  const fs::path data_dir = fresh_dir("run_cls_data");
  write_dataset(volumes, 2, data_dir);
  const TrainConfig cfg = tiny_config({{"model.n_classes", "3"}});
  EXPECT_THROW(run_training(cfg, data_dir, fresh_dir("run_cls_out"), {}, true), ConfigError);
}

TEST(Evaluate, TeacherAndStudentReportsBothValid) {
  const TrainConfig cfg = tiny_config();
  const auto volumes = tiny_volumes();
  Trainer trainer(cfg, volumes);
  for (int i = 0; i < 10; ++i) trainer.step();
  const MetricReport teacher_report = trainer.evaluate(trainer.split().test, false);
  const MetricReport student_report = trainer.evaluate(trainer.split().test, true);
  EXPECT_EQ(teacher_report.iteration, 10);
  EXPECT_EQ(teacher_report.config_hash, config_hash(cfg));
  EXPECT_GE(teacher_report.dsc_avg, 0.0);
  EXPECT_LE(student_report.dsc_avg, 1.0);
}
