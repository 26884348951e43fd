#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ictseg/checkpoint.hpp"
#include "ictseg/config.hpp"
#include "ictseg/dataset.hpp"
#include "ictseg/dataset_io.hpp"
#include "ictseg/metrics.hpp"
#include "ictseg/objective.hpp"
#include "ictseg/optim.hpp"
#include "ictseg/report_io.hpp"

namespace ictseg {

struct TrainState {
  StudentTeacher<float> pair;
  long iteration = 0;
  Rng rng_labelled;
  Rng rng_unlabelled;
  Rng rng_alpha;
  OptimizerState<float> opt;
  std::vector<LossReport> history;
};

// One object per run: owns the split, the samplers, the network and the
// mutable training state, and executes the per-iteration sequence: labelled
// batch -> CE; unlabelled pair -> teacher pseudo-labels -> interpolation ->
// consistency MSE; combined gradient; EMA update; optimizer step.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const std::vector<Volume>& volumes)
      : cfg_(cfg),
        volumes_(&volumes),
        split_(make_split(volumes, cfg.label_fraction, cfg.n_validation, cfg.n_test, cfg.seed)),
        sampler_(volumes, split_),
        net_(build_network<float>(cfg.model)),
        grads_(net_.param_template()),
        ws_(net_.make_workspace()) {
    state_.pair = make_student_teacher(init_params(net_, cfg.model.init_seed), cfg.lambda_ema);
    state_.opt = make_optimizer_state(state_.pair.student);
    state_.rng_labelled = Rng(derived_seed(cfg.seed, 1));
    state_.rng_unlabelled = Rng(derived_seed(cfg.seed, 2));
    state_.rng_alpha = Rng(derived_seed(cfg.seed, 3));
  }

  const TrainConfig& config() const { return cfg_; }
  const DatasetSplit& split() const { return split_; }
  const TrainState& state() const { return state_; }
  const Network<float>& network() const { return net_; }

  // The unsupervised branch runs only when its plateau weight is nonzero, so
  // a w_max=0 run consumes exactly the rng draws of a supervised-only loop.
  bool unsupervised_active() const { return cfg_.ramp.w_max > 0.0; }

  LossReport step() {
    if (state_.iteration >= cfg_.total_iters)
      throw TrainingError("step: iteration " + std::to_string(state_.iteration) +
                          " is out of range, total_iters=" + std::to_string(cfg_.total_iters));
    const long t = state_.iteration;

    const BatchPair labelled =
        sampler_.sample(BatchMode::labelled, cfg_.batch_labelled, state_.rng_labelled);
    const Tensor<float> x = to_tensor<float>(labelled.first);
    const Tensor<std::int32_t> y = to_label_tensor(labelled.second);
    const Tensor<float>& probs = net_.forward(state_.pair.student, x, ws_);
    auto [l_ce, d_ce] = cross_entropy_with_grad(probs, y);
    if (!std::isfinite(l_ce))
      throw TrainingError("non-finite supervised loss (l_ce) at iteration " + std::to_string(t));
    grads_.fill(0.0f);
    net_.backward(state_.pair.student, ws_, d_ce, grads_);

    double l_u = 0.0;
    const double r_t = ramp(cfg_.ramp, t);
    if (unsupervised_active()) {
      const BatchPair unlabelled =
          sampler_.sample(BatchMode::unlabelled, cfg_.batch_unlabelled, state_.rng_unlabelled);
      const Tensor<float> u_i = to_tensor<float>(unlabelled.first);
      const Tensor<float> u_j = to_tensor<float>(unlabelled.second);
      std::vector<double> alphas(u_i.batch());
      if (cfg_.mix.resample == AlphaResample::per_batch) {
        const double a = draw_alpha(cfg_.mix, state_.rng_alpha);
        std::fill(alphas.begin(), alphas.end(), a);
      } else {
        for (double& a : alphas) a = draw_alpha(cfg_.mix, state_.rng_alpha);
      }
      l_u = consistency_loss_grad(net_, state_.pair.student, state_.pair.teacher, u_i, u_j,
                                  alphas, r_t, grads_, ws_);
      if (!std::isfinite(l_u))
        throw TrainingError("non-finite consistency loss (l_u) at iteration " +
                            std::to_string(t));
    }

    const LossReport report = total_loss(l_ce, l_u, cfg_.ramp, t);
    if (!std::isfinite(report.total))
      throw TrainingError("non-finite total loss at iteration " + std::to_string(t));

    // Literal Algorithm-1 order: the EMA update reads the pre-step student.
    // ema_after_step flips to the common mean-teacher variant.
    if (!cfg_.ema_after_step) {
      ema_update(state_.pair);
      optimizer_step(state_.pair.student, grads_, state_.opt, cfg_.optim);
    } else {
      optimizer_step(state_.pair.student, grads_, state_.opt, cfg_.optim);
      ema_update(state_.pair);
    }

    state_.iteration = t + 1;
    state_.history.push_back(report);
    return report;
  }

  // Teacher-parameter evaluation (the smoother ensemble); pass use_student
  // to audit the raw student instead.
  MetricReport evaluate(const std::vector<std::string>& volume_ids, bool use_student = false) {
    const std::vector<Volume> pool = copy_volumes_by_ids(*volumes_, volume_ids);
    MetricReport report = evaluate_volumes(
        net_, use_student ? state_.pair.student : state_.pair.teacher, pool,
        cfg_.model.n_classes);
    report.config_hash = config_hash(cfg_);
    report.seed = cfg_.seed;
    report.iteration = state_.iteration;
    return report;
  }

  MetricReport evaluate_validation() { return evaluate(split_.validation); }
  MetricReport evaluate_test() { return evaluate(split_.test); }

  Checkpoint make_checkpoint() const {
    Checkpoint ckpt;
    ckpt.iteration = state_.iteration;
    ckpt.config_hash = config_hash(cfg_);
    ckpt.model = cfg_.model;
    ckpt.lambda_ema = cfg_.lambda_ema;
    ckpt.optimizer_step = state_.opt.step;
    ckpt.rng_labelled = state_.rng_labelled.state();
    ckpt.rng_unlabelled = state_.rng_unlabelled.state();
    ckpt.rng_alpha = state_.rng_alpha.state();
    ckpt.student = state_.pair.student;
    ckpt.teacher = state_.pair.teacher;
    ckpt.opt_m = state_.opt.m;
    ckpt.opt_v = state_.opt.v;
    return ckpt;
  }

  void restore(const Checkpoint& ckpt) {
    if (ckpt.config_hash != config_hash(cfg_))
      throw ConfigError("checkpoint config hash " + ckpt.config_hash +
                        " does not match the resolved config " + config_hash(cfg_));
    state_.pair.student.require_congruent(ckpt.student, "restore");
    state_.pair.student = ckpt.student;
    state_.pair.teacher = ckpt.teacher;
    state_.opt.m = ckpt.opt_m;
    state_.opt.v = ckpt.opt_v;
    state_.opt.step = ckpt.optimizer_step;
    state_.iteration = ckpt.iteration;
    state_.rng_labelled.set_state(ckpt.rng_labelled);
    state_.rng_unlabelled.set_state(ckpt.rng_unlabelled);
    state_.rng_alpha.set_state(ckpt.rng_alpha);
    state_.history.clear();
  }

 private:
  TrainConfig cfg_;
  const std::vector<Volume>* volumes_;
  DatasetSplit split_;
  BatchSampler sampler_;
  Network<float> net_;
  ParamSet<float> grads_;
  Workspace<float> ws_;
  TrainState state_;
};

inline void write_history_csv(const std::vector<LossReport>& history,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "iteration,l_ce,l_u,r_t,total\n";
  char buf[176];
  for (const LossReport& r : history) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.l_ce, r.l_u,
                  r.r_t, r.total);
    out << buf;
  }
}

// Full run: T iterations with periodic teacher-side validation and
// checkpointing, then the final test-set report. Artifacts in out_dir:
// config.resolved.json, history.csv, checkpoints/iter_<t>.ckpt, report.json.
inline MetricReport run_training(const TrainConfig& cfg, const std::filesystem::path& dataset_dir,
                                 const std::filesystem::path& out_dir,
                                 const std::filesystem::path& resume_from = {},
                                 bool quiet = false) {
  validate_config(cfg);
  if (cfg.n_test < 1) throw ConfigError("data.n_test must be >= 1 for a training run");
  const StoredDataset ds = read_dataset(dataset_dir);
  if (ds.n_classes != cfg.model.n_classes)
    throw ConfigError("dataset has " + std::to_string(ds.n_classes) +
                      " classes but model.n_classes=" + std::to_string(cfg.model.n_classes));

  std::filesystem::create_directories(out_dir / "checkpoints");
  write_resolved_config(cfg, out_dir / "config.resolved.json");

  Trainer trainer(cfg, ds.volumes);
  if (!resume_from.empty()) trainer.restore(load_checkpoint(resume_from));

  const auto save = [&](long iteration) {
    save_checkpoint(trainer.make_checkpoint(),
                    out_dir / "checkpoints" / ("iter_" + std::to_string(iteration) + ".ckpt"));
  };

  try {
    while (trainer.state().iteration < cfg.total_iters) {
      const LossReport r = trainer.step();
      const long done = trainer.state().iteration;
      if (cfg.eval_every > 0 && done % cfg.eval_every == 0 && !trainer.split().validation.empty()) {
        const MetricReport val = trainer.evaluate_validation();
        if (!quiet)
          std::cout << "iter " << done << "  l_ce " << r.l_ce << "  l_u " << r.l_u << "  r_t "
                    << r.r_t << "  total " << r.total << "  val_dsc " << val.dsc_avg << "\n";
      }
      if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 &&
          done < cfg.total_iters)
        save(done);
    }
  } catch (...) {
    // keep what we have: periodic checkpoints stay on disk, history too
    write_history_csv(trainer.state().history, out_dir / "history.csv");
    throw;
  }

  save(cfg.total_iters);
  write_history_csv(trainer.state().history, out_dir / "history.csv");
  MetricReport report = trainer.evaluate_test();
  write_report(report, out_dir / "report.json");
  if (!quiet)
    std::cout << "final test  dsc " << report.dsc_avg << "  asd "
              << (report.asd_avg ? std::to_string(*report.asd_avg) : "undefined") << "  hd "
              << (report.hd_avg ? std::to_string(*report.hd_avg) : "undefined") << "\n";
  return report;
}

}  // namespace ictseg
